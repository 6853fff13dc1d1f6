// No-U-Turn sampler with multinomial trajectory sampling, the generalized
// U-turn criterion, dual-averaging step size and windowed diagonal metric
// adaptation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "phylocorr/sampler.hpp"

namespace phylocorr {

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd q, p, grad;
  double lp = 0.0;
};

class StepSizeAdapter {
 public:
  StepSizeAdapter(double delta) : delta_(delta) {}
  void restart(double eps) {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
    mu_ = std::log(10.0 * eps);
  }
  double learn(double accept) {
    ++counter_;
    accept = std::min(1.0, accept);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / kGamma;
    const double x_eta = std::pow(static_cast<double>(counter_), -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
  double delta_;
  long counter_ = 0;
  double s_bar_ = 0.0, x_bar_ = 0.0, mu_ = 0.0;
};

// Welford variance over windows that double in length between a fixed
// initial and terminal buffer.
class MetricAdapter {
 public:
  MetricAdapter(int n, int warmup) : n_(n), warmup_(warmup) {
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
    reset_estimator();
  }

  // Returns true when a window closed and `var` was updated.
  bool learn(Eigen::VectorXd& var, const Eigen::VectorXd& q) {
    if (in_window()) add(q);
    if (end_window()) {
      compute_next_window();
      const double n = static_cast<double>(count_);
      var = m2_ / (n - 1.0);
      var = (n / (n + 5.0)) * var + Eigen::VectorXd::Constant(n_, 1e-3 * (5.0 / (n + 5.0)));
      reset_estimator();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
  }
  bool end_window() const { return counter_ == next_window_ && counter_ != warmup_; }
  void compute_next_window() {
    if (next_window_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != warmup_ - term_buffer_ - 1) {
      if (next_window_ + 2 * window_size_ >= warmup_ - term_buffer_)
        next_window_ = warmup_ - term_buffer_ - 1;
    }
  }
  void reset_estimator() {
    count_ = 0;
    mean_ = Eigen::VectorXd::Zero(n_);
    m2_ = Eigen::VectorXd::Zero(n_);
  }
  void add(const Eigen::VectorXd& q) {
    ++count_;
    const Eigen::VectorXd d = q - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d.cwiseProduct(q - mean_);
  }

  int n_, warmup_;
  int init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  int counter_ = 0, window_size_ = 0, next_window_ = 0;
  long count_ = 0;
  Eigen::VectorXd mean_, m2_;
};

class Chain {
 public:
  Chain(const DensityModel& model, const SamplerConfig& cfg, int index)
      : model_(model), cfg_(cfg), n_(static_cast<int>(model.dim())),
        rng_(chain_seed(cfg.seed, index)), inv_metric_(Eigen::VectorXd::Ones(n_)) {}

  void run(Draws& out, int chain) {
    initialize();
    step_ = 1.0;
    init_stepsize();
    StepSizeAdapter ssa(cfg_.target_accept);
    ssa.restart(step_);
    MetricAdapter metric(n_, cfg_.warmup);

    long warm_div = 0;
    for (int it = 0; it < cfg_.warmup; ++it) {
      const Transition t = transition();
      if (t.divergent) ++warm_div;
      step_ = ssa.learn(t.accept);
      if (metric.learn(inv_metric_, z_.q)) {
        init_stepsize();
        ssa.restart(step_);
      }
    }
    if (cfg_.warmup > 0) {
      if (warm_div == cfg_.warmup)
        throw SamplingError("every warmup iteration diverged (chain " + std::to_string(chain) + ")");
      step_ = ssa.final_step();
    }

    const std::size_t np = model_.parameter_names().size();
    std::vector<double> constrained(np);
    for (int it = 0; it < cfg_.iterations; ++it) {
      const Transition t = transition();
      model_.constrain(std::span<const double>(z_.q.data(), static_cast<std::size_t>(n_)),
                       constrained);
      for (std::size_t k = 0; k < np; ++k) out.at(chain, it, k) = constrained[k];
      const double diag[7] = {z_.lp, t.accept, step_, static_cast<double>(t.depth),
                              static_cast<double>(t.n_leapfrog), t.divergent ? 1.0 : 0.0,
                              t.energy};
      for (std::size_t k = 0; k < 7; ++k) out.at(chain, it, np + k) = diag[k];
    }
    out.step_size[static_cast<std::size_t>(chain)] = step_;
    out.inv_metric[static_cast<std::size_t>(chain)] =
        std::vector<double>(inv_metric_.data(), inv_metric_.data() + n_);
  }

 private:
  struct Transition {
    double accept = 0.0;
    int depth = 0;
    long n_leapfrog = 0;
    bool divergent = false;
    double energy = 0.0;
  };

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  bool evaluate(PhasePoint& z) const {
    z.lp = model_.log_density_gradient(std::span<const double>(z.q.data(), static_cast<std::size_t>(n_)),
                                       std::span<double>(z.grad.data(), static_cast<std::size_t>(n_)));
    return std::isfinite(z.lp) && z.grad.allFinite();
  }

  void initialize() {
    z_.q.resize(n_);
    z_.p = Eigen::VectorXd::Zero(n_);
    z_.grad.resize(n_);
    std::uniform_real_distribution<double> u(-cfg_.init_radius, cfg_.init_radius);
    for (int attempt = 0; attempt < cfg_.init_tries; ++attempt) {
      for (int i = 0; i < n_; ++i) z_.q[i] = u(rng_);
      if (evaluate(z_)) return;
    }
    throw SamplingError("could not find a finite initial point after " +
                        std::to_string(cfg_.init_tries) + " attempts");
  }

  void sample_momentum(PhasePoint& z) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = 0; i < n_; ++i) z.p[i] = nd(rng_) / std::sqrt(inv_metric_[i]);
  }

  double hamiltonian(const PhasePoint& z) const {
    return -z.lp + 0.5 * z.p.cwiseProduct(inv_metric_).dot(z.p);
  }

  Eigen::VectorXd p_sharp(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    if (!evaluate(z)) {
      z.lp = -kInf;
      return;
    }
    z.p += 0.5 * eps * z.grad;
  }

  void init_stepsize() {
    const PhasePoint start = z_;
    PhasePoint z = z_;
    sample_momentum(z);
    double h0 = hamiltonian(z);
    leapfrog(z, step_);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    double delta = h0 - h;
    const int direction = delta > std::log(0.8) ? 1 : -1;
    while (true) {
      z = start;
      sample_momentum(z);
      h0 = hamiltonian(z);
      leapfrog(z, step_);
      h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
      delta = h0 - h;
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw SamplingError("step size diverged during initialization; the posterior may be improper");
      if (step_ == 0.0) throw SamplingError("step size collapsed to zero during initialization");
    }
  }

  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
  }

  struct TreeState {
    long n_leapfrog = 0;
    double sum_metro = 0.0;
    bool divergent = false;
    double h0 = 0.0;
  };

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double sign, double& log_sum_weight, TreeState& ts) {
    if (depth == 0) {
      leapfrog(z, sign * step_);
      ++ts.n_leapfrog;
      double h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
      if (h - ts.h0 > kMaxDeltaH) ts.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, ts.h0 - h);
      ts.sum_metro += ts.h0 - h > 0.0 ? 1.0 : std::exp(ts.h0 - h);
      z_propose = z;
      p_sharp_beg = p_sharp(z);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !ts.divergent;
    }

    Eigen::VectorXd p_init_end(n_), p_sharp_init_end(n_), rho_init = Eigen::VectorXd::Zero(n_);
    double lsw_init = -kInf;
    if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, sign, lsw_init, ts))
      return false;

    PhasePoint z_propose_final = z;
    Eigen::VectorXd p_final_beg(n_), p_sharp_final_beg(n_), rho_final = Eigen::VectorXd::Zero(n_);
    double lsw_final = -kInf;
    if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, sign, lsw_final, ts))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  Transition transition() {
    sample_momentum(z_);
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p, p_sharp_fwd_fwd = p_sharp(z_);
    Eigen::VectorXd p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;
    double log_sum_weight = 0.0;

    TreeState ts;
    ts.h0 = hamiltonian(z_);
    int depth = 0;

    while (depth < cfg_.max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n_), rho_bck = Eigen::VectorXd::Zero(n_);
      bool valid = false;
      double lsw_subtree = -kInf;
      if (uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        PhasePoint z = z_fwd;
        valid = build_tree(depth, z, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                           p_fwd_bck, p_fwd_fwd, 1.0, lsw_subtree, ts);
        z_fwd = z;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        PhasePoint z = z_bck;
        valid = build_tree(depth, z, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                           p_bck_fwd, p_bck_bck, -1.0, lsw_subtree, ts);
        z_bck = z;
      }
      if (!valid) break;
      ++depth;

      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    Transition t;
    t.depth = depth;
    t.n_leapfrog = ts.n_leapfrog;
    t.divergent = ts.divergent;
    t.accept = ts.n_leapfrog > 0 ? ts.sum_metro / static_cast<double>(ts.n_leapfrog) : 0.0;
    z_ = z_sample;
    t.energy = hamiltonian(z_);
    return t;
  }

  const DensityModel& model_;
  const SamplerConfig& cfg_;
  int n_;
  std::mt19937_64 rng_;
  Eigen::VectorXd inv_metric_;
  PhasePoint z_;
  double step_ = 1.0;
};

int thread_count(const SamplerConfig& cfg) {
  int t = cfg.threads;
  if (t <= 0) {
    if (const char* env = std::getenv("PHYLOCORR_THREADS")) t = std::atoi(env);
  }
  if (t <= 0) t = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::min(t, cfg.chains);
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("chains must be at least 1");
  if (warmup < 1) throw std::invalid_argument("warmup iterations must be at least 1");
  if (iterations < 1) throw std::invalid_argument("sampling iterations must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("target acceptance must lie in (0, 1)");
  if (max_depth < 1) throw std::invalid_argument("max tree depth must be at least 1");
  if (!(init_radius > 0.0)) throw std::invalid_argument("init radius must be positive");
  if (init_tries < 1) throw std::invalid_argument("init tries must be at least 1");
}

std::uint64_t chain_seed(std::uint64_t seed, int chain) {
  // SplitMix64 over (seed, chain): a counter-based split.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) + static_cast<std::uint64_t>(chain) * 0x9e3779b97f4a7c15ULL);
}

std::vector<double> leapfrog_energies(const DensityModel& model, std::vector<double> q,
                                      std::vector<double> p, double step, int steps) {
  const std::size_t n = model.dim();
  if (q.size() != n || p.size() != n) throw std::invalid_argument("state has the wrong dimension");
  std::vector<double> g(n);
  double lp = model.log_density_gradient(q, g);
  auto energy = [&] {
    double k = 0.0;
    for (double v : p) k += 0.5 * v * v;
    return -lp + k;
  };
  std::vector<double> out{energy()};
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * step * g[i];
    for (std::size_t i = 0; i < n; ++i) q[i] += step * p[i];
    lp = model.log_density_gradient(q, g);
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * step * g[i];
    out.push_back(energy());
  }
  return out;
}

const std::vector<std::string>& diagnostic_names() {
  static const std::vector<std::string> names{"lp__",         "accept_stat__", "stepsize__",
                                              "treedepth__",  "n_leapfrog__",  "divergent__",
                                              "energy__"};
  return names;
}

Draws sample(const DensityModel& model, const SamplerConfig& cfg) {
  cfg.validate();
  if (model.dim() == 0) throw std::invalid_argument("model has no parameters");
  Draws out;
  out.names = model.parameter_names();
  out.diag_names = diagnostic_names();
  out.chains = cfg.chains;
  out.iterations = cfg.iterations;
  out.values.assign(static_cast<std::size_t>(cfg.chains) * static_cast<std::size_t>(cfg.iterations) *
                        out.columns(),
                    0.0);
  out.step_size.assign(static_cast<std::size_t>(cfg.chains), 0.0);
  out.inv_metric.assign(static_cast<std::size_t>(cfg.chains), {});

  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  int first_error_chain = cfg.chains;
  auto worker = [&] {
    while (true) {
      const int c = next.fetch_add(1);
      if (c >= cfg.chains) return;
      try {
        Chain chain(model, cfg, c);
        chain.run(out, c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        // Report the lowest-numbered failing chain so errors are deterministic.
        if (c < first_error_chain) {
          first_error_chain = c;
          first_error = std::current_exception();
        }
      }
    }
  };
  const int nt = thread_count(cfg);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace phylocorr
