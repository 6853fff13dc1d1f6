#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include "phylocorr/asr.hpp"
#include "phylocorr/diagnostics.hpp"

namespace phylocorr {

namespace {

// depth(u) - depth(mrca(u, w)) for all node pairs.
Eigen::MatrixXd ancestor_offsets(const Tree& tree) {
  const NodeDistances nd = node_distances(tree);
  const std::vector<double> depth = tree.depths();
  const auto v = static_cast<Eigen::Index>(tree.node_count());
  Eigen::MatrixXd off(v, v);
  for (Eigen::Index u = 0; u < v; ++u)
    for (Eigen::Index w = 0; w < v; ++w)
      off(u, w) = depth[static_cast<std::size_t>(u)] -
                  depth[static_cast<std::size_t>(nd.mrca[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)])];
  return off;
}

struct Workspace {
  std::vector<int> tips, internal;
  Eigen::MatrixXd off;
};

// Covariance between node lists `a` and `b` (trait-major blocks).
Eigen::MatrixXd cross_block(const Workspace& ws, const std::vector<int>& a, const std::vector<int>& b,
                            const Eigen::Matrix2d& S, const Eigen::Vector2d& lam) {
  const auto na = static_cast<Eigen::Index>(a.size()), nb = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd c(2 * na, 2 * nb);
  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index j = 0; j < nb; ++j) {
      const double du = ws.off(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
      const double dw = ws.off(b[static_cast<std::size_t>(j)], a[static_cast<std::size_t>(i)]);
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) c(p * na + i, q * nb + j) = S(p, q) * std::exp(-lam[p] * du - lam[q] * dw);
    }
  return c;
}

NodeConditional condition(const Workspace& ws, const CorrelationBlock& lang, const Eigen::Vector2d& lam,
                          const Eigen::MatrixX2d& tip_values, const JitterPolicy& jitter, bool want_cov) {
  const Eigen::Matrix2d S = ou_stationary(OUParams{lam[0], lang.sigma1, 0.0}, OUParams{lam[1], lang.sigma2, 0.0},
                                          lang.rho);
  const Eigen::MatrixXd Ctt = cross_block(ws, ws.tips, ws.tips, S, lam);
  const Eigen::MatrixXd Cit = cross_block(ws, ws.internal, ws.tips, S, lam);
  const FactoredCovariance fc = factor_covariance(Ctt, jitter);
  const auto nt = static_cast<Eigen::Index>(ws.tips.size());
  Eigen::VectorXd t(2 * nt);
  t.head(nt) = tip_values.col(0);
  t.tail(nt) = tip_values.col(1);
  NodeConditional out;
  out.internal = ws.internal;
  out.mean = Cit * fc.llt.solve(t);
  if (want_cov) {
    const Eigen::MatrixXd Cii = cross_block(ws, ws.internal, ws.internal, S, lam);
    out.cov = Cii - Cit * fc.llt.solve(Cit.transpose());
    out.cov = 0.5 * (out.cov + out.cov.transpose());
  }
  return out;
}

Workspace workspace(const Tree& tree) {
  Workspace ws;
  ws.tips = tree.tips();
  for (int v = 0; v < static_cast<int>(tree.node_count()); ++v)
    if (!tree.node(v).is_tip()) ws.internal.push_back(v);
  ws.off = ancestor_offsets(tree);
  return ws;
}

int worker_count(int requested, std::size_t jobs) {
  int t = requested;
  if (t <= 0) {
    if (const char* env = std::getenv("PHYLOCORR_THREADS")) t = std::atoi(env);
  }
  if (t <= 0) t = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), std::max<std::size_t>(1, jobs)));
}

using M2 = Eigen::Matrix2d;
using V2 = Eigen::Vector2d;

// Per-draw quantities of the upward pass. Information (J, h) about x_v from
// the tips below v; for the downward step x_c | x_p ~
// N(K x_p + b, C) with K = (I + QJ)^-1 F, b = (I + QJ)^-1 Q h, C = (I + QJ)^-1 Q.
struct TreePass {
  std::vector<M2> K, C;
  std::vector<V2> b;
};

TreePass tree_pass(const Tree& tree, const std::vector<int>& tip_row, const CorrelationBlock& lang,
                   const V2& lam, const Eigen::MatrixX2d& tipv) {
  const M2 S = ou_stationary(OUParams{lam[0], lang.sigma1, 0.0}, OUParams{lam[1], lang.sigma2, 0.0}, lang.rho);
  // exact tip observations get a tiny noise floor so a zero-length branch stays finite
  const double floor = 1e-12 * S.trace();
  const std::size_t V = tree.node_count();
  std::vector<M2> J(V, M2::Zero());
  std::vector<V2> h(V, V2::Zero());
  TreePass tp{std::vector<M2>(V, M2::Zero()), std::vector<M2>(V, M2::Zero()), std::vector<V2>(V, V2::Zero())};
  const M2 I = M2::Identity();
  auto transition = [&](int v, M2& F, M2& Q) {
    const double t = tree.node(v).length;
    F = V2((-lam[0] * t), (-lam[1] * t)).array().exp().matrix().asDiagonal();
    Q = S - F * S * F;
    Q = 0.5 * (Q + Q.transpose());
  };
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int v = *it;
    const auto vi = static_cast<std::size_t>(v);
    const int p = tree.node(v).parent;
    if (p < 0) continue;
    M2 F, Q;
    transition(v, F, Q);
    const auto pi = static_cast<std::size_t>(p);
    if (tree.node(v).is_tip()) {
      const M2 Qj = Q + floor * I;
      const V2 y = tipv.row(tip_row[vi]).transpose();
      const M2 Qi = Qj.inverse();
      J[pi] += F * Qi * F;
      h[pi] += F * Qi * y;
    } else {
      const M2 A = (I + Q * J[vi]).inverse();
      tp.K[vi] = A * F;
      tp.b[vi] = A * Q * h[vi];
      tp.C[vi] = A * Q;
      J[pi] += F * J[vi] * A * F;  // F^T J (I + QJ)^-1 F, F diagonal
      h[pi] += F * (I + J[vi] * Q).inverse() * h[vi];
    }
  }
  const auto r = static_cast<std::size_t>(tree.root());
  const M2 A = (I + S * J[r]).inverse();
  tp.K[r] = M2::Zero();
  tp.b[r] = A * S * h[r];
  tp.C[r] = A * S;
  for (auto& c : tp.C) c = 0.5 * (c + c.transpose());
  return tp;
}

std::vector<int> tip_rows(const Tree& tree) {
  std::vector<int> row(tree.node_count(), -1);
  const auto& tips = tree.tips();
  for (std::size_t j = 0; j < tips.size(); ++j) row[static_cast<std::size_t>(tips[j])] = static_cast<int>(j);
  return row;
}

V2 draw2(const M2& cov, std::mt19937_64& rng) {
  const Eigen::SelfAdjointEigenSolver<M2> es(cov);
  std::normal_distribution<double> nd(0.0, 1.0);
  V2 e(nd(rng), nd(rng));
  e = e.cwiseProduct(es.eigenvalues().cwiseMax(0.0).cwiseSqrt());
  return es.eigenvectors() * e;
}

}  // namespace

TreeConditional condition_on_tips_fast(const Tree& tree, const CorrelationBlock& lang, const Eigen::Vector2d& lambda,
                                       const Eigen::MatrixX2d& tip_values) {
  if (tip_values.rows() != static_cast<Eigen::Index>(tree.tip_count()))
    throw std::invalid_argument("tip value matrix does not match the tree");
  const std::vector<int> row = tip_rows(tree);
  const TreePass tp = tree_pass(tree, row, lang, lambda, tip_values);
  TreeConditional out{Eigen::MatrixX2d(static_cast<Eigen::Index>(tree.node_count()), 2),
                      std::vector<M2>(tree.node_count(), M2::Zero())};
  for (int v : tree.preorder()) {
    const auto vi = static_cast<std::size_t>(v);
    if (tree.node(v).is_tip()) {
      out.mean.row(v) = tip_values.row(row[vi]);
      continue;
    }
    const int p = tree.node(v).parent;
    V2 m = tp.b[vi];
    M2 c = tp.C[vi];
    if (p >= 0) {
      m += tp.K[vi] * out.mean.row(p).transpose();
      c += tp.K[vi] * out.cov[static_cast<std::size_t>(p)] * tp.K[vi].transpose();
    }
    out.mean.row(v) = m.transpose();
    out.cov[vi] = 0.5 * (c + c.transpose());
  }
  return out;
}

NodeConditional condition_on_tips(const Tree& tree, const CorrelationBlock& lang, const Eigen::Vector2d& lambda,
                                  const Eigen::MatrixX2d& tip_values, const JitterPolicy& jitter) {
  if (tip_values.rows() != static_cast<Eigen::Index>(tree.tip_count()))
    throw std::invalid_argument("tip value matrix does not match the tree");
  return condition(workspace(tree), lang, lambda, tip_values, jitter, true);
}

std::vector<NodeReconstruction> reconstruct(const ModelSpec& spec, const Draws& draws, const ModelData& data,
                                            const Tree& tree, const ReconstructOptions& options) {
  std::vector<std::string> a = tree.tip_labels(), b = data.taxa;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw std::invalid_argument("tree tips do not match the fitted taxa");
  ModelData d = data;
  d.tree = tree;
  return reconstruct(spec, draws, d, options);
}

std::vector<NodeReconstruction> reconstruct(const ModelSpec& spec, const Draws& draws, const ModelData& data,
                                            const ReconstructOptions& options) {
  if (spec.dependency != Dependency::Phylo)
    throw std::invalid_argument("reconstruction needs the phylogenetic model");
  if (!data.tree) throw std::invalid_argument("reconstruction needs a tree");
  const Posterior post(spec, data);  // validates tips against taxa
  if (draws.names != post.parameter_names())
    throw std::invalid_argument("draws do not match the model's parameters");
  const Tree& tree = *data.tree;
  const std::vector<int> row = tip_rows(tree);
  const std::vector<int>& tips = tree.tips();
  const auto V = static_cast<Eigen::Index>(tree.node_count());

  // Taxon row per tip node; family set per node.
  std::vector<int> taxon_of(tree.node_count(), -1);
  for (std::size_t i = 0; i < data.size(); ++i) taxon_of[static_cast<std::size_t>(*tree.find_tip(data.taxa[i]))] = static_cast<int>(i);
  std::vector<int> family(tree.node_count(), -2);  // -2 unset, -1 mixed
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int v = *it;
    auto& f = family[static_cast<std::size_t>(v)];
    if (tree.node(v).is_tip()) f = data.family[static_cast<std::size_t>(taxon_of[static_cast<std::size_t>(v)])];
    for (int c : tree.node(v).children) {
      const int fc = family[static_cast<std::size_t>(c)];
      f = f == -2 ? fc : (f == fc ? f : -1);
    }
  }

  // Draw subset.
  const std::size_t total = static_cast<std::size_t>(draws.chains) * static_cast<std::size_t>(draws.iterations);
  std::size_t keep = total;
  if (options.max_draws > 0) keep = std::min(total, static_cast<std::size_t>(options.max_draws));
  std::vector<std::size_t> pick(keep);
  for (std::size_t k = 0; k < keep; ++k) pick[k] = k * total / keep;

  const bool ordbin = spec.likelihood == Likelihood::OrdinalBinary;
  // states[k]: V x 2 reconstructed states for draw pick[k].
  std::vector<Eigen::MatrixX2d> states(keep);
  auto run = [&](std::size_t k) {
    const std::size_t flat = pick[k];
    const int c = static_cast<int>(flat / static_cast<std::size_t>(draws.iterations));
    const int t = static_cast<int>(flat % static_cast<std::size_t>(draws.iterations));
    std::vector<double> theta(post.dim());
    post.unconstrain(draws.draw(c, t), theta);
    const DecodedDraw dd = post.decode(theta);
    const auto nt = static_cast<Eigen::Index>(tips.size());
    Eigen::MatrixX2d tipv(nt, 2), tip_state(nt, 2);
    for (Eigen::Index j = 0; j < nt; ++j) {
      const int node = tips[static_cast<std::size_t>(j)];
      const auto i = static_cast<std::size_t>(taxon_of[static_cast<std::size_t>(node)]);
      const Eigen::RowVector2d zf = dd.z_family.row(data.family[i]);
      if (ordbin) {
        tip_state.row(j) = dd.z.row(static_cast<Eigen::Index>(i));
      } else {
        tip_state(j, 0) = data.x1[i];
        tip_state(j, 1) = data.x2[i];
      }
      tipv.row(j) = tip_state.row(j) - dd.mu.transpose() - zf;
    }
    const TreePass tp = tree_pass(tree, row, dd.lang, dd.lambda, tipv);
    std::mt19937_64 rng(chain_seed(options.seed, static_cast<int>(flat)));
    Eigen::MatrixX2d phylo(V, 2);
    Eigen::MatrixX2d out(V, 2);
    for (int v : tree.preorder()) {
      const auto vi = static_cast<std::size_t>(v);
      if (tree.node(v).is_tip()) {
        phylo.row(v) = tipv.row(row[vi]);
        out.row(v) = tip_state.row(row[vi]);
        continue;
      }
      const int p = tree.node(v).parent;
      V2 x = tp.b[vi];
      if (p >= 0) x += tp.K[vi] * phylo.row(p).transpose();
      if (options.sample) x += draw2(tp.C[vi], rng);
      phylo.row(v) = x.transpose();
      Eigen::RowVector2d st = x.transpose() + dd.mu.transpose();
      const int f = family[vi];
      if (f >= 0) st += dd.z_family.row(f);
      out.row(v) = st;
    }
    states[k] = std::move(out);
  };

  const int nthreads = worker_count(options.threads, keep);
  if (nthreads <= 1) {
    for (std::size_t k = 0; k < keep; ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
    for (int w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = static_cast<std::size_t>(w); k < keep; k += static_cast<std::size_t>(nthreads)) run(k);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<NodeReconstruction> out;
  std::vector<double> vals(keep);
  for (Eigen::Index v = 0; v < V; ++v) {
    NodeReconstruction r;
    r.node = static_cast<int>(v);
    r.name = tree.node_name(r.node);
    r.tip = tree.node(r.node).is_tip();
    r.family = std::max(-1, family[static_cast<std::size_t>(v)]);
    for (int a = 0; a < 2; ++a) {
      // centred on the first value so constant columns stay exact
      for (std::size_t k = 0; k < keep; ++k) vals[k] = states[k](v, a);
      double m = 0.0;
      for (double x : vals) m += x - vals[0];
      m = vals[0] + m / static_cast<double>(keep);
      double s = 0.0;
      for (double x : vals) s += (x - m) * (x - m);
      r.mean[static_cast<std::size_t>(a)] = m;
      r.sd[static_cast<std::size_t>(a)] = keep > 1 ? std::sqrt(s / static_cast<double>(keep - 1)) : 0.0;
      r.q025[static_cast<std::size_t>(a)] = quantile(vals, 0.025);
      r.q975[static_cast<std::size_t>(a)] = quantile(vals, 0.975);
    }
    out.push_back(r);
  }
  return out;
}

std::string reconstruction_csv(const std::vector<NodeReconstruction>& recs) {
  std::ostringstream os;
  os.precision(10);
  os << "node,name,tip,trait,mean,sd,q2.5,q97.5,spans_families\n";
  for (const auto& r : recs)
    for (std::size_t a = 0; a < 2; ++a)
      os << r.node << ',' << r.name << ',' << (r.tip ? 1 : 0) << ',' << a + 1 << ',' << r.mean[a] << ','
         << r.sd[a] << ',' << r.q025[a] << ',' << r.q975[a] << ',' << (r.spans_families() ? 1 : 0) << '\n';
  return os.str();
}

std::string annotated_newick(const Tree& tree, const std::vector<NodeReconstruction>& recs) {
  NewickFormat fmt;
  fmt.precision = 10;
  for (const auto& r : recs) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "&mean1=%.6g,mean2=%.6g,sd1=%.6g,sd2=%.6g,spans_families=%d", r.mean[0],
                  r.mean[1], r.sd[0], r.sd[1], r.spans_families() ? 1 : 0);
    fmt.comments[r.node] = buf;
  }
  return to_newick(tree, fmt);
}

}  // namespace phylocorr
