#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "phylocorr/diagnostics.hpp"

using namespace phylocorr;

namespace {

Draws from_chains(const std::vector<std::vector<double>>& chains, const std::string& name = "x") {
  Draws d;
  d.names = {name};
  d.chains = static_cast<int>(chains.size());
  d.iterations = static_cast<int>(chains.front().size());
  for (const auto& c : chains) d.values.insert(d.values.end(), c.begin(), c.end());
  return d;
}

std::vector<double> normals(std::size_t n, double mean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(mean, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST(Summary, ConstantChains) {
  const auto rows = summarize(from_chains({std::vector<double>(100, 3.0), std::vector<double>(100, 3.0)}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 3.0);
  EXPECT_DOUBLE_EQ(rows[0].sd, 0.0);
  EXPECT_DOUBLE_EQ(rows[0].q025, 3.0);
  EXPECT_DOUBLE_EQ(rows[0].q975, 3.0);
  EXPECT_TRUE(std::isnan(rows[0].rhat));
  EXPECT_TRUE(std::isnan(rows[0].n_eff));
  EXPECT_NE(summary_text(rows).find("NA"), std::string::npos);
}

TEST(Summary, SeparatedChainsGiveLargeRhat) {
  const std::vector<std::vector<double>> chains{normals(2000, 0.0, 1), normals(2000, 5.0, 2)};
  // By hand: split means approx (0, 0, 5, 5), within variance approx 1, so
  // var+ = W (n-1)/n + B/n approx 1 + 25/3.
  EXPECT_NEAR(split_rhat_basic(chains), std::sqrt(1.0 + 25.0 / 3.0), 0.1);
  EXPECT_GT(split_rhat(chains), 1.1);
  EXPECT_GT(summarize(from_chains(chains))[0].rhat, 1.1);
}

TEST(Summary, SingleChainRhatNotAvailable) {
  const auto rows = summarize(from_chains({normals(1000, 0.0, 3)}));
  EXPECT_TRUE(std::isnan(rows[0].rhat));
  EXPECT_FALSE(std::isnan(rows[0].n_eff));
}

TEST(Summary, IndependentDraws) {
  std::vector<std::vector<double>> chains;
  for (std::uint64_t c = 0; c < 4; ++c) chains.push_back(normals(10000, 0.0, 10 + c));
  const auto r = summarize(from_chains(chains))[0];
  EXPECT_NEAR(r.n_eff, 40000.0, 0.2 * 40000.0);
  EXPECT_NEAR(r.q025, -1.96, 0.05);
  EXPECT_NEAR(r.q975, 1.96, 0.05);
  EXPECT_LT(std::abs(r.rhat - 1.0), 0.01);
  EXPECT_NEAR(r.se_mean, r.sd / std::sqrt(r.n_eff), 1e-15);
  EXPECT_NEAR(ess_basic(chains), 40000.0, 0.2 * 40000.0);
}

TEST(Summary, Ar1EffectiveSampleSize) {
  // AR(1) with coefficient phi: integrated autocorrelation (1+phi)/(1-phi).
  const double phi = 0.6;
  std::vector<std::vector<double>> chains;
  for (std::uint64_t c = 0; c < 4; ++c) {
    std::mt19937_64 rng(100 + c);
    std::normal_distribution<double> nd(0.0, std::sqrt(1 - phi * phi));
    std::vector<double> x(20000);
    double s = std::normal_distribution<double>(0.0, 1.0)(rng);
    for (auto& v : x) v = s = phi * s + nd(rng);
    chains.push_back(x);
  }
  const double expected = 80000.0 * (1 - phi) / (1 + phi);
  EXPECT_NEAR(ess_basic(chains), expected, 0.1 * expected);
  EXPECT_NEAR(ess_bulk(chains), expected, 0.1 * expected);
}

TEST(Summary, AntitheticChainIsCapped) {
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? 1.0 : -1.0) * (1.0 + 0.01 * (i % 7));
  const double S = 2000.0;
  const double ess = ess_basic({x, x});
  EXPECT_LE(ess, S * std::log10(S) * (1 + 1e-12));
  EXPECT_GT(ess, S);
}

TEST(Summary, PermutationInvariantMoments) {
  std::vector<double> a = normals(500, 1.0, 5), b = normals(500, 1.2, 6);
  const auto r1 = summarize(from_chains({a, b}))[0];
  std::mt19937_64 rng(7);
  std::shuffle(a.begin(), a.end(), rng);
  std::shuffle(b.begin(), b.end(), rng);
  const auto r2 = summarize(from_chains({a, b}))[0];
  EXPECT_NEAR(r1.mean, r2.mean, 1e-12);
  EXPECT_NEAR(r1.sd, r2.sd, 1e-12);
  EXPECT_DOUBLE_EQ(r1.q025, r2.q025);
  EXPECT_DOUBLE_EQ(r1.q975, r2.q975);
}

TEST(Summary, QuantileErrorShrinksWithDrawCount) {
  // Expected absolute error scales as 1/sqrt(n): quadrupling n halves it,
  // doubling cuts it by sqrt(2).
  auto mean_err = [](std::size_t n) {
    double e = 0.0;
    for (std::uint64_t r = 0; r < 400; ++r) e += std::abs(quantile(normals(n, 0.0, 5000 + r * 7 + n), 0.025) + 1.959963985);
    return e / 400.0;
  };
  const double e1 = mean_err(1000), e2 = mean_err(2000), e4 = mean_err(4000);
  EXPECT_NEAR(e1 / e2, std::sqrt(2.0), 0.25);
  EXPECT_NEAR(e1 / e4, 2.0, 0.35);
}

TEST(Quantile, Type7) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.3), 5.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-16);
}

TEST(CredibleInterval, ExcludesZero) {
  SummaryRow r;
  r.q025 = 0.68;
  r.q975 = 0.97;
  EXPECT_TRUE(credible_interval_excludes_zero(r));
  r.q025 = -0.064;
  r.q975 = 0.045;
  EXPECT_FALSE(credible_interval_excludes_zero(r));
  r.q025 = 0.0;
  r.q975 = 1.0;
  EXPECT_FALSE(credible_interval_excludes_zero(r));
  r.q025 = -1.0;
  r.q975 = -0.2;
  EXPECT_TRUE(credible_interval_excludes_zero(r));
}

TEST(SummaryOutput, CsvAndTextColumnOrder) {
  std::vector<SummaryRow> rows{{"rho", 0.84, 0.002, 0.08, 0.68, 0.97, 1234.4, 1.0012}};
  const std::string csv = summary_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "parameter,mean,se_mean,sd,q2.5,q97.5,n_eff,rhat");
  EXPECT_NE(csv.find("rho,0.84,0.002,0.08,0.68,0.97,1234.4,1.0012"), std::string::npos);
  const std::string text = summary_text(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "Parameter   Mean  SE_Mean     SD   2.5%  97.5%  n_eff  Rhat");
  EXPECT_NE(text.find("rho        0.840    0.002  0.080  0.680  0.970   1234  1.00"), std::string::npos);
}
