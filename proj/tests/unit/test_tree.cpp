#include <gtest/gtest.h>

#include <cmath>

#include "phylocorr/tree.hpp"
#include "test_util.hpp"

using namespace phylocorr;

namespace {

double depth_of(const Tree& t, const std::string& label) {
  return t.depths()[static_cast<std::size_t>(*t.find_tip(label))];
}

double path(const PathMatrix& m, const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m.labels[k] == a) i = k;
    if (m.labels[k] == b) j = k;
  }
  return m.t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

}  // namespace

TEST(Newick, TwoTips) {
  const Tree t = parse_newick("(A:1,B:1):0;");
  EXPECT_EQ(t.tip_count(), 2u);
  EXPECT_DOUBLE_EQ(depth_of(t, "A"), 1.0);
  EXPECT_DOUBLE_EQ(depth_of(t, "B"), 1.0);
}

TEST(Newick, ThreeTips) {
  const Tree t = parse_newick("((A:1,B:1):1,C:2):0;");
  EXPECT_EQ(t.tip_count(), 3u);
  const int a = *t.find_tip("A");
  const int parent = t.node(a).parent;
  EXPECT_DOUBLE_EQ(t.depths()[static_cast<std::size_t>(parent)], 1.0);
}

TEST(Newick, Errors) {
  EXPECT_THROW(parse_newick("((A:1,B:1):1,C:2"), NewickError);
  EXPECT_THROW(parse_newick(""), NewickError);
  EXPECT_THROW(parse_newick("   "), NewickError);
  EXPECT_THROW(parse_newick("(A:1,A:2);"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,B:1)));"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,B:-1);"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,B:x);"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,B:1); extra"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,B:1)[open;"), NewickError);
  EXPECT_THROW(parse_newick("(A:1,():1);"), NewickError);
  try {
    parse_newick("(A:1,A:2);");
  } catch (const NewickError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
}

TEST(Newick, MissingLengthWarns) {
  std::vector<NewickWarning> w;
  const Tree t = parse_newick("(A,B:1);", &w);
  EXPECT_EQ(t.tip_count(), 2u);
  EXPECT_GE(w.size(), 1u);
  EXPECT_DOUBLE_EQ(depth_of(t, "A"), 0.0);
}

TEST(Newick, CommentsAndQuotes) {
  const Tree t = parse_newick("[header]('Old English':1[&x=1],'it''s':2)root:0;");
  EXPECT_TRUE(t.find_tip("Old English").has_value());
  EXPECT_TRUE(t.find_tip("it's").has_value());
  EXPECT_EQ(t.node(t.root()).label, "root");
  const Tree back = parse_newick(to_newick(t));
  EXPECT_EQ(back.tip_labels(), t.tip_labels());
}

TEST(Newick, RoundTripRandomTrees) {
  for (int s = 0; s < 20; ++s) {
    const Tree t = testutil::random_tree(5 + s * 3, 100 + s);
    const Tree back = parse_newick(to_newick(t));
    ASSERT_EQ(back.node_count(), t.node_count());
    ASSERT_EQ(back.tip_labels(), t.tip_labels());
    const auto p1 = path_length_matrix(t), p2 = path_length_matrix(back);
    EXPECT_LT((p1.t - p2.t).cwiseAbs().maxCoeff(), 1e-12);
    // Same preorder shape: compare lengths node by node along preorder.
    for (std::size_t k = 0; k < t.node_count(); ++k) {
      const auto& a = t.node(t.preorder()[k]);
      const auto& b = back.node(back.preorder()[k]);
      EXPECT_NEAR(a.length, b.length, 1e-12);
      EXPECT_EQ(a.children.size(), b.children.size());
      EXPECT_EQ(a.label, b.label);
    }
  }
}

TEST(TreeValidation, RejectsBadStructures) {
  std::vector<TreeNode> cyc{{1, {1}, 0.0, ""}, {0, {0}, 1.0, "A"}};
  EXPECT_THROW(Tree(cyc, 0), TreeError);
  std::vector<TreeNode> neg{{-1, {1, 2}, 0.0, ""}, {0, {}, -1.0, "A"}, {0, {}, 1.0, "B"}};
  EXPECT_THROW(Tree(neg, 0), TreeError);
  std::vector<TreeNode> unlabeled{{-1, {1, 2}, 0.0, ""}, {0, {}, 1.0, ""}, {0, {}, 1.0, "B"}};
  EXPECT_THROW(Tree(unlabeled, 0), TreeError);
  std::vector<TreeNode> orphan{{-1, {1}, 0.0, ""}, {0, {}, 1.0, "A"}, {-1, {}, 1.0, "B"}};
  EXPECT_THROW(Tree(orphan, 0), TreeError);
}

TEST(Prune, PreservesPathLength) {
  const Tree t = parse_newick("((A:1,B:1):1,C:2);");
  const Tree p = prune(t, {"A", "C"});
  EXPECT_EQ(p.tip_count(), 2u);
  EXPECT_EQ(p.node_count(), 3u);
  EXPECT_DOUBLE_EQ(depth_of(p, "A"), 2.0);
  EXPECT_DOUBLE_EQ(depth_of(p, "C"), 2.0);
  EXPECT_DOUBLE_EQ(path(path_length_matrix(p), "A", "C"), 4.0);
}

TEST(Prune, IdentityAndErrors) {
  const Tree t = parse_newick("((A:1,B:1):1,C:2);");
  const Tree p = prune(t, {"A", "B", "C"});
  EXPECT_EQ(p.node_count(), t.node_count());
  EXPECT_EQ(to_newick(p), to_newick(t));
  EXPECT_THROW(prune(t, {"A"}), TreeError);
  EXPECT_THROW(prune(t, {"A", "Z"}), TreeError);
}

TEST(Prune, RandomSubsetsKeepPathsExactly) {
  for (int s = 0; s < 10; ++s) {
    const Tree t = testutil::random_tree(40, 900 + s);
    std::set<std::string> keep;
    std::mt19937_64 rng(s);
    for (const auto& l : t.tip_labels())
      if (rng() % 3 != 0) keep.insert(l);
    const Tree p = prune(t, keep);
    EXPECT_EQ(p.tip_count(), keep.size());
    const auto pm = path_length_matrix(p);
    for (std::size_t i = 0; i < pm.size(); ++i)
      for (std::size_t j = 0; j < pm.size(); ++j) {
        const double ref = testutil::naive_path(t, *t.find_tip(pm.labels[i]),
                                                *t.find_tip(pm.labels[j]));
        // Summation order differs, so allow for rounding only.
        EXPECT_NEAR(pm.t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), ref,
                    1e-12);
      }
  }
}

TEST(Ultrametric, TwoTipScaling) {
  const Tree u = make_ultrametric(parse_newick("(A:1,B:3):0;"));
  EXPECT_NEAR(depth_of(u, "A"), 2.0, 1e-15);
  EXPECT_NEAR(depth_of(u, "B"), 2.0, 1e-15);
}

TEST(Ultrametric, FixedPoint) {
  const Tree t = parse_newick("((A:1,B:1):1,C:2);");
  const Tree u = make_ultrametric(t);
  for (std::size_t k = 0; k < t.node_count(); ++k)
    EXPECT_NEAR(u.node(static_cast<int>(k)).length, t.node(static_cast<int>(k)).length, 1e-15);
}

TEST(Ultrametric, ThreeTips) {
  const Tree u = make_ultrametric(parse_newick("((A:1,B:1):1,C:2);"));
  for (const char* l : {"A", "B", "C"}) EXPECT_NEAR(depth_of(u, l), 2.0, 1e-12);
}

TEST(Ultrametric, RandomTreesReachMeanDepth) {
  for (int s = 0; s < 30; ++s) {
    const Tree t = testutil::random_tree(3 + s * 5, 400 + s);
    double mean = 0.0;
    const auto d0 = t.depths();
    for (int tip : t.tips()) mean += d0[static_cast<std::size_t>(tip)];
    mean /= static_cast<double>(t.tip_count());
    const Tree u = make_ultrametric(t);
    const auto d = u.depths();
    for (int tip : u.tips()) EXPECT_LT(std::abs(d[static_cast<std::size_t>(tip)] - mean), 1e-9);
    EXPECT_TRUE(u.is_ultrametric(1e-9));
    for (const auto& nd : u.nodes()) EXPECT_GE(nd.length, 0.0);
  }
}

TEST(Ultrametric, ZeroDepthTipIsError) {
  EXPECT_THROW(make_ultrametric(parse_newick("(A:0,B:1);")), TreeError);
}

TEST(PathMatrix, HandExamples) {
  const auto m = path_length_matrix(parse_newick("((A:1,B:1):1,C:2);"));
  EXPECT_DOUBLE_EQ(path(m, "A", "B"), 2.0);
  EXPECT_DOUBLE_EQ(path(m, "A", "C"), 4.0);
  EXPECT_DOUBLE_EQ(path(m, "B", "C"), 4.0);
  EXPECT_DOUBLE_EQ(path(path_length_matrix(parse_newick("(A:1,B:1);")), "A", "B"), 2.0);
  const std::string csv = path_matrix_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "taxon,A,B,C");
}

TEST(PathMatrix, FiftyTipsAgainstNaiveTraversal) {
  const Tree t = testutil::random_tree(50, 2024);
  const auto m = path_length_matrix(t);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j)
      EXPECT_NEAR(m.t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                  testutil::naive_path(t, t.tips()[i], t.tips()[j]), 1e-12);
}

TEST(PathMatrix, PropertySymmetricZeroDiagonal) {
  for (int s = 0; s < 120; ++s) {
    const Tree t = testutil::random_tree(2 + s % 37, 7000 + s, s % 2 == 0);
    const auto m = path_length_matrix(t);
    EXPECT_EQ(m.t.diagonal().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((m.t - m.t.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(m.t.minCoeff(), 0.0);
  }
}

TEST(NodeDistances, MatchesNaiveWalk) {
  const Tree t = testutil::random_tree(12, 55);
  const auto nd = node_distances(t);
  for (int a = 0; a < static_cast<int>(t.node_count()); ++a)
    for (int b = 0; b < static_cast<int>(t.node_count()); ++b)
      EXPECT_NEAR(nd.distance(a, b), testutil::naive_path(t, a, b), 1e-12);
}

TEST(TreeNaming, CladeAndNodeNames) {
  const Tree t = parse_newick("((B:1,A:1):1,C:2);");
  const int a = *t.find_tip("A");
  const int p = t.node(a).parent;
  EXPECT_EQ(t.clade(p), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(t.node_name(t.root()), "node0");
  EXPECT_EQ(t.node_name(a), "A");
}
