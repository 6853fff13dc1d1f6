#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "phylocorr/asr.hpp"
#include "phylocorr/compare.hpp"
#include "phylocorr/diagnostics.hpp"
#include "phylocorr/simulate.hpp"
#include "plots.hpp"

namespace phylocorr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw IoError("directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

Dependency dependency_of(const std::string& model) {
  if (model == "vanilla") return Dependency::Pooled;
  if (model == "hier") return Dependency::Family;
  if (model == "phylo") return Dependency::Phylo;
  try {
    return dependency_from_string(model);
  } catch (const std::exception&) {
    throw ValidationError("unknown model '" + model + "' (vanilla, hier or phylo)");
  }
}

std::string model_name(Dependency d) {
  switch (d) {
    case Dependency::Pooled: return "vanilla";
    case Dependency::Family: return "hier";
    case Dependency::Phylo: return "phylo";
  }
  return "?";
}

Likelihood likelihood_of(const RunConfig& c, const Schema& schema) {
  if (!c.likelihood.empty()) {
    try {
      return likelihood_from_string(c.likelihood);
    } catch (const std::exception&) {
      throw ValidationError("unknown likelihood '" + c.likelihood + "' (ordbin or cont)");
    }
  }
  bool ord = false, bin = false;
  for (const auto& t : schema.traits) {
    ord = ord || t.kind == TraitKind::Ordinal;
    bin = bin || t.kind == TraitKind::Binary;
  }
  return ord && bin ? Likelihood::OrdinalBinary : Likelihood::Continuous;
}

json loo_to_json(const LooResult& l) {
  auto arr = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  return json{{"elpd", l.elpd},         {"se", l.se},           {"lpd", l.lpd},
              {"conditional", l.conditional},
              {"k_good", l.k_good},     {"k_ok", l.k_ok},       {"k_bad", l.k_bad},
              {"k_very_bad", l.k_very_bad}, {"degenerate", l.degenerate},
              {"pointwise", arr(l.pointwise)}, {"pareto_k", arr(l.pareto_k)}};
}

LooResult loo_from_json(const json& j) {
  LooResult l;
  l.elpd = j.at("elpd").get<double>();
  l.se = j.at("se").get<double>();
  l.lpd = j.at("lpd").get<double>();
  l.conditional = j.at("conditional").get<bool>();
  l.k_good = j.at("k_good").get<int>();
  l.k_ok = j.at("k_ok").get<int>();
  l.k_bad = j.at("k_bad").get<int>();
  l.k_very_bad = j.at("k_very_bad").get<int>();
  l.degenerate = j.at("degenerate").get<int>();
  for (const auto& x : j.at("pointwise")) l.pointwise.push_back(x.is_null() ? std::nan("") : x.get<double>());
  for (const auto& x : j.at("pareto_k"))
    l.pareto_k.push_back(x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>());
  return l;
}

int report(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

// Runs `body`, mapping exception types onto exit codes.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    return report(e, kValidation);
  } catch (const IoError& e) {
    return report(e, kIo);
  } catch (const SamplingError& e) {
    return report(e, kSampling);
  } catch (const DataError& e) {
    return report(e, kValidation);
  } catch (const TreeError& e) {
    return report(e, kValidation);
  } catch (const json::exception& e) {
    return report(e, kValidation);
  } catch (const std::invalid_argument& e) {
    return report(e, kValidation);
  } catch (const std::out_of_range& e) {
    return report(e, kValidation);
  } catch (const fs::filesystem_error& e) {
    return report(e, kIo);
  } catch (const std::exception& e) {
    return report(e, kSampling);
  }
}

// ---- fit ------------------------------------------------------------------

struct FitOutputs {
  fs::path dir;
};

void emit_plot(const fs::path& run, const std::string& kind, const fs::path& out);

int cmd_fit(const RunConfig& c) {
  c.validate();
  const Schema schema_in = load_schema(c.schema);
  const Dependency dep = dependency_of(c.model);
  const Likelihood lik = likelihood_of(c, schema_in);
  if (dep == Dependency::Phylo && c.tree.empty()) throw ValidationError("the phylo model needs --tree");
  const fs::path out(c.out);
  make_dir(out);

  const PreparedData pd = prepare_data(c);
  ModelSpec spec;
  spec.likelihood = lik;
  spec.dependency = dep;
  const ModelData md = make_model_data(pd.table, lik, pd.tree ? &*pd.tree : nullptr);

  SamplerConfig sc;
  sc.chains = c.chains;
  sc.warmup = c.warmup;
  sc.iterations = c.iters;
  sc.seed = c.seed;
  sc.target_accept = c.target_accept;
  sc.max_depth = c.max_depth;
  const Posterior post(spec, md);
  const Draws draws = sample(post, sc);

  write_text(out / "config.json", run_config_to_json(c) + "\n");
  write_text(out / "data.csv", table_to_csv(pd.table));
  write_text(out / "schema.json", schema_to_json(pd.schema) + "\n");
  if (pd.tree) write_text(out / "tree.nwk", to_newick(*pd.tree) + "\n");
  write_draws_binary((out / "draws.bin").string(), draws);
  write_text(out / "draws.csv", draws_to_csv(draws));

  std::vector<std::string> headline;
  for (std::size_t i : post.headline_indices()) headline.push_back(draws.names[i]);
  const auto rows = summarize(draws, headline);
  write_text(out / "summary.csv", summary_csv(rows));
  write_text(out / "summary.txt", summary_text(rows));

  json eval;
  if (static_cast<long>(draws.chains) * draws.iterations >= 100) {
    eval["loo"] = loo_to_json(psis_loo(pointwise_loglik(post, draws)));
  } else {
    eval["loo"] = nullptr;
    eval["loo_error"] = "fewer than 100 draws";
  }
  try {
    BridgeOptions bo;
    bo.seed = c.seed;
    const BridgeResult br = log_marginal_bridge(post, draws, bo);
    eval["bridge"] = {{"log_marginal", br.log_marginal},
                      {"iterations", br.iterations},
                      {"n_fit", br.n_fit},
                      {"n_bridge", br.n_bridge},
                      {"proposal_ess_fraction", br.proposal_ess_fraction}};
  } catch (const std::exception& e) {
    eval["bridge"] = nullptr;
    eval["bridge_error"] = e.what();
  }
  write_text(out / "evaluation.json", eval.dump(2) + "\n");

  if (dep == Dependency::Phylo) {
    ReconstructOptions ro;
    ro.seed = c.seed;
    const auto recs = reconstruct(spec, draws, md, ro);
    write_text(out / "asr.csv", reconstruction_csv(recs));
    write_text(out / "asr.nwk", annotated_newick(*md.tree, recs) + "\n");
  }

  double max_rhat = 0.0;
  for (const auto& r : rows)
    if (std::isfinite(r.rhat)) max_rhat = std::max(max_rhat, r.rhat);
  RunConfig hashed = c;
  hashed.out.clear();
  json manifest{{"tool", "phylocorr"},
                {"version", kVersion},
                {"command", "fit"},
                {"config", json::parse(run_config_to_json(c))},
                {"config_hash", content_hash(run_config_to_json(hashed))},
                {"seed", c.seed},
                {"dataset_hash", pd.dataset_hash},
                {"model", model_name(dep)},
                {"spec", json::parse(model_spec_to_json(spec))},
                {"taxa", md.size()},
                {"families", md.family_count()},
                {"ultrametricized", pd.ultrametricized},
                {"dropped_from_table", pd.dropped_from_table},
                {"dropped_from_tree", pd.dropped_from_tree},
                {"divergent", draws.divergent_count()},
                {"max_treedepth_hits", draws.max_depth_hits(c.max_depth)},
                {"max_rhat", max_rhat},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  std::cout << spec.label() << " on " << md.size() << " taxa (" << md.family_count() << " families)\n"
            << summary_text(rows);
  if (draws.divergent_count() > 0) std::cout << "divergent transitions: " << draws.divergent_count() << "\n";

  if (c.emit_plots) {
    const fs::path plots = out / "plots";
    if (lik == Likelihood::Continuous) emit_plot(out, "scatter", plots);
    if (lik == Likelihood::OrdinalBinary) emit_plot(out, "crosstab", plots);
    if (dep == Dependency::Phylo) emit_plot(out, "tree-annotation", plots);
  }
  return kOk;
}

// ---- compare --------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& runs, const std::string& out_dir, const std::string& reference) {
  if (runs.size() < 2) throw ValidationError("compare needs at least two run directories");
  std::vector<ModelFit> fits;
  std::map<std::string, int> seen;
  for (const auto& r : runs) {
    const fs::path dir(r);
    if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "evaluation.json"))
      throw ValidationError(r + " is not a completed run directory");
    const json m = json::parse(read_text((dir / "manifest.json").string()));
    const json e = json::parse(read_text((dir / "evaluation.json").string()));
    if (e.at("loo").is_null()) throw ValidationError(r + " has no LOO result");
    ModelFit f;
    f.name = m.at("model").get<std::string>();
    if (int n = ++seen[f.name]; n > 1) f.name += "#" + std::to_string(n);
    f.dataset_id = m.at("dataset_hash").get<std::string>();
    f.loo = loo_from_json(e.at("loo"));
    if (!e.at("bridge").is_null()) {
      BridgeResult b;
      b.log_marginal = e["bridge"].at("log_marginal").get<double>();
      b.iterations = e["bridge"].at("iterations").get<int>();
      b.n_fit = e["bridge"].at("n_fit").get<std::size_t>();
      b.n_bridge = e["bridge"].at("n_bridge").get<std::size_t>();
      b.proposal_ess_fraction = e["bridge"].at("proposal_ess_fraction").get<double>();
      f.bridge = b;
    }
    fits.push_back(std::move(f));
  }
  for (const auto& f : fits)
    if (f.dataset_id != fits.front().dataset_id)
      throw ValidationError("runs were fitted to different datasets (" + fits.front().dataset_id + " vs " +
                            f.dataset_id + ")");
  const ComparisonReport rep =
      compare(fits, reference.empty() ? std::nullopt : std::optional<std::string>(reference));
  const fs::path out(out_dir);
  make_dir(out);
  write_text(out / "comparison.csv", comparison_csv(rep));
  write_text(out / "comparison.txt", comparison_text(rep));
  std::cout << comparison_text(rep);
  return kOk;
}

// ---- plotdata -------------------------------------------------------------

TraitTable run_table(const fs::path& run) {
  const Schema s = load_schema((run / "schema.json").string());
  return load_table((run / "data.csv").string(), s);
}

void emit_plot(const fs::path& run, const std::string& kind, const fs::path& out) {
  if (!fs::exists(run / "manifest.json")) throw ValidationError(run.string() + " is not a completed run directory");
  if (kind != "scatter" && kind != "tree-annotation" && kind != "crosstab")
    throw ValidationError("unknown plot kind '" + kind + "' (scatter, tree-annotation, crosstab)");
  make_dir(out);
  if (kind == "scatter") {
    const TraitTable t = run_table(run);
    const Schema raw = load_schema(json::parse(read_text((run / "manifest.json").string()))
                                       .at("config")
                                       .at("schema")
                                       .get<std::string>());
    std::vector<const TraitColumn*> cont;
    for (const auto& c : t.columns)
      if (c.kind == TraitKind::Continuous) cont.push_back(&c);
    if (cont.size() < 2) throw ValidationError("scatter needs two continuous traits");
    auto label = [&](const TraitColumn& c) {
      for (const auto& s : raw.traits)
        if (s.name == c.name && s.transform == Transform::LogStandardize) return "log-" + c.name + "-std";
      return c.name;
    };
    std::vector<ScatterPoint> pts;
    std::ostringstream csv;
    csv.precision(10);
    csv << "taxon," << label(*cont[0]) << "," << label(*cont[1]) << ",family\n";
    for (std::size_t i = 0; i < t.rows(); ++i) {
      pts.push_back({t.taxa[i], *cont[0]->values[i], *cont[1]->values[i], t.families[i]});
      csv << t.taxa[i] << "," << pts.back().x << "," << pts.back().y << "," << t.families[i] << "\n";
    }
    const auto trends = trend_lines(pts);
    std::ostringstream tcsv;
    tcsv.precision(10);
    tcsv << "group,n,slope,intercept\n";
    for (const auto& tr : trends) tcsv << tr.group << "," << tr.n << "," << tr.slope << "," << tr.intercept << "\n";
    write_text(out / "scatter.csv", csv.str());
    write_text(out / "scatter_trends.csv", tcsv.str());
    write_text(out / "scatter.svg", scatter_svg(pts, trends, label(*cont[0]), label(*cont[1])));
  } else if (kind == "crosstab") {
    const TraitTable t = run_table(run);
    const TraitColumn* ord = nullptr;
    const TraitColumn* bin = nullptr;
    for (const auto& c : t.columns) {
      if (c.kind == TraitKind::Ordinal && !ord) ord = &c;
      if (c.kind == TraitKind::Binary && !bin) bin = &c;
    }
    if (!ord || !bin) throw ValidationError("crosstab needs an ordinal and a binary trait");
    const CrossTab ct = crosstab(*ord, *bin);
    write_text(out / "crosstab.csv", crosstab_csv(ct));
    write_text(out / "crosstab.svg", crosstab_svg(ct));
  } else {
    if (!fs::exists(run / "asr.nwk")) throw ValidationError("tree-annotation needs a phylo run");
    const std::string nwk = read_text((run / "asr.nwk").string());
    write_text(out / "tree_annotation.nwk", nwk);
    const std::string csv = read_text((run / "asr.csv").string());
    write_text(out / "tree_annotation.csv", csv);
    // rebuild records from the CSV for colouring
    const Tree tree = parse_newick(read_text((run / "tree.nwk").string()));
    std::vector<NodeReconstruction> recs(tree.node_count());
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) f.push_back(cell);
      if (f.size() < 5) continue;
      const auto node = static_cast<std::size_t>(std::stoi(f[0]));
      const auto trait = static_cast<std::size_t>(std::stoi(f[3]) - 1);
      if (node < recs.size() && trait < 2) {
        recs[node].node = static_cast<int>(node);
        recs[node].mean[trait] = std::stod(f[4]);
      }
    }
    write_text(out / "tree_annotation.svg", tree_svg(tree, recs));
  }
}

// ---- simulate -------------------------------------------------------------

struct SimConfig {
  std::string params, tree, model = "phylo", likelihood = "ordbin", out;
  int ntips = 0;
  double cut_depth = 0.5;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimConfig& s) {
  if (s.params.empty()) throw ValidationError("--params is required");
  if (s.out.empty()) throw ValidationError("--out is required");
  if (s.tree.empty() && s.ntips < 3) throw ValidationError("--ntips must be at least 3 (or pass --tree)");
  ModelSpec spec;
  spec.dependency = dependency_of(s.model);
  try {
    spec.likelihood = likelihood_from_string(s.likelihood);
  } catch (const std::exception&) {
    throw ValidationError("unknown likelihood '" + s.likelihood + "'");
  }
  const TrueParams tp = true_params_from_json(read_text(s.params));
  tp.validate(spec);
  const Tree tree = s.tree.empty() ? random_coalescent_tree(s.ntips, 1.0, chain_seed(s.seed, 1000))
                                   : read_newick_file(s.tree);
  const ModelData layout = tree_layout(tree, s.cut_depth);
  const SimulatedData sim = simulate(spec, tp, layout, s.seed);
  const fs::path out(s.out);
  make_dir(out);
  const TraitTable table = to_trait_table(sim.data);
  const std::string csv = table_to_csv(table);
  const std::string nwk = to_newick(tree);
  write_text(out / "languages.csv", csv);
  write_text(out / "schema.json", schema_to_json(schema_for(sim.data)) + "\n");
  write_text(out / "tree.nwk", nwk + "\n");
  write_text(out / "truth.json", true_params_to_json(tp) + "\n");
  json manifest{{"tool", "phylocorr"},
                {"version", kVersion},
                {"command", "simulate"},
                {"model", model_name(spec.dependency)},
                {"likelihood", std::string(to_string(spec.likelihood))},
                {"seed", s.seed},
                {"ntips", tree.tip_count()},
                {"cut_depth", s.cut_depth},
                {"families", sim.data.family_count()},
                {"truth", json::parse(true_params_to_json(tp))},
                {"dataset_hash", content_hash(csv + "\n" + nwk)}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "simulated " << sim.data.size() << " taxa in " << sim.data.family_count() << " families -> " << s.out
            << "\n";
  return kOk;
}

}  // namespace

// ---- shared ---------------------------------------------------------------

void RunConfig::validate() const {
  if (data.empty()) throw ValidationError("--data is required");
  if (schema.empty()) throw ValidationError("--schema is required");
  if (out.empty()) throw ValidationError("--out is required");
  for (const auto* p : {&data, &schema, &tree})
    if (!p->empty() && !fs::is_regular_file(*p)) throw ValidationError("no such file: " + *p);
  dependency_of(model);
  if (!likelihood.empty()) {
    try {
      likelihood_from_string(likelihood);
    } catch (const std::exception&) {
      throw ValidationError("unknown likelihood '" + likelihood + "' (ordbin or cont)");
    }
  }
  SamplerConfig sc;
  sc.chains = chains;
  sc.warmup = warmup;
  sc.iterations = iters;
  sc.target_accept = target_accept;
  sc.max_depth = max_depth;
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

std::string run_config_to_json(const RunConfig& c) {
  json j{{"data", c.data},       {"schema", c.schema},     {"tree", c.tree},
         {"model", c.model},     {"likelihood", c.likelihood},
         {"chains", c.chains},   {"warmup", c.warmup},     {"iters", c.iters},
         {"seed", c.seed},       {"target_accept", c.target_accept},
         {"max_depth", c.max_depth}, {"out", c.out},       {"emit_plots", c.emit_plots}};
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "data") c.data = v.get<std::string>();
    else if (k == "schema") c.schema = v.get<std::string>();
    else if (k == "tree") c.tree = v.get<std::string>();
    else if (k == "model") c.model = v.get<std::string>();
    else if (k == "likelihood") c.likelihood = v.get<std::string>();
    else if (k == "chains") c.chains = v.get<int>();
    else if (k == "warmup") c.warmup = v.get<int>();
    else if (k == "iters") c.iters = v.get<int>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "target_accept") c.target_accept = v.get<double>();
    else if (k == "max_depth") c.max_depth = v.get<int>();
    else if (k == "out") c.out = v.get<std::string>();
    else if (k == "emit_plots") c.emit_plots = v.get<bool>();
    else throw ValidationError("unknown config key '" + k + "'");
  }
  return c;
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData prepare_data(const RunConfig& c) {
  PreparedData pd;
  const Schema schema = load_schema(c.schema);
  const TraitTable raw = load_table(c.data, schema);
  TraitTable kept;
  if (!c.tree.empty()) {
    Alignment a = align(raw, read_newick_file(c.tree));
    kept = std::move(a.table);
    pd.dropped_from_table = std::move(a.dropped_from_table);
    pd.dropped_from_tree = std::move(a.dropped_from_tree);
    Tree t = std::move(a.tree);
    if (!t.is_ultrametric(1e-9)) {
      t = make_ultrametric(t);
      pd.ultrametricized = true;
    }
    pd.tree = std::move(t);
  } else {
    kept = complete_cases(raw, &pd.dropped_from_table);
  }
  pd.table = apply_transforms(kept, schema);
  pd.schema = schema;
  for (auto& t : pd.schema.traits) t.transform = Transform::None;
  pd.dataset_hash = content_hash(table_to_csv(pd.table) + "\n" + (pd.tree ? to_newick(*pd.tree) : std::string()));
  return pd;
}

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Bayesian bivariate trait correlation under pooled, family and OU phylogenetic models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit one model and write a run directory");
  RunConfig fc;
  std::string fit_config;
  fit->add_option("--config", fit_config, "JSON file with any of the options below; flags override it");
  auto* o_data = fit->add_option("--data", fc.data, "Trait table (CSV)");
  auto* o_schema = fit->add_option("--schema", fc.schema, "Column schema (JSON)");
  auto* o_tree = fit->add_option("--tree", fc.tree, "Newick tree; taxa are aligned to it");
  auto* o_model = fit->add_option("--model", fc.model, "vanilla | hier | phylo");
  auto* o_lik = fit->add_option("--likelihood", fc.likelihood, "ordbin | cont (default: from the schema)");
  auto* o_chains = fit->add_option("--chains", fc.chains);
  auto* o_warm = fit->add_option("--warmup", fc.warmup);
  auto* o_iters = fit->add_option("--iters", fc.iters);
  auto* o_seed = fit->add_option("--seed", fc.seed);
  auto* o_out = fit->add_option("--out", fc.out, "Run directory");
  auto* o_ta = fit->add_option("--target-accept", fc.target_accept);
  auto* o_md = fit->add_option("--max-depth", fc.max_depth);
  auto* o_plots = fit->add_flag("--emit-plots", fc.emit_plots, "Also write plot data into <out>/plots");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from known parameters");
  SimConfig sc;
  std::string sim_config;
  sim->add_option("--config", sim_config, "JSON file with any of the options below; flags override it");
  auto* s_params = sim->add_option("--params", sc.params, "True parameters (JSON)");
  auto* s_model = sim->add_option("--model", sc.model, "vanilla | hier | phylo");
  auto* s_lik = sim->add_option("--likelihood", sc.likelihood, "ordbin | cont");
  auto* s_ntips = sim->add_option("--ntips", sc.ntips, "Random coalescent tree of this size");
  auto* s_tree = sim->add_option("--tree", sc.tree, "Use this tree instead");
  auto* s_cut = sim->add_option("--cut-depth", sc.cut_depth, "Families are the clades below this root distance");
  auto* s_seed = sim->add_option("--seed", sc.seed);
  auto* s_out = sim->add_option("--out", sc.out);

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare completed runs on the same dataset");
  std::vector<std::string> runs;
  std::string cmp_out = ".", cmp_ref;
  cmp->add_option("runs", runs, "Run directories")->required();
  cmp->add_option("--out", cmp_out, "Directory for comparison.csv and comparison.txt");
  cmp->add_option("--reference", cmp_ref, "Reference model (default: highest log marginal likelihood)");

  // plotdata
  auto* plt = app.add_subcommand("plotdata", "Write plot-ready CSV and SVG for a run");
  std::string plot_run, plot_kind, plot_out;
  plt->add_option("run", plot_run, "Run directory")->required();
  plt->add_option("--kind", plot_kind, "scatter | tree-annotation | crosstab")->required();
  plt->add_option("--out", plot_out, "Output directory (default: <run>/plots)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  if (fit->parsed()) {
    return guarded([&] {
      RunConfig c;
      if (!fit_config.empty()) c = run_config_from_json(read_text(fit_config));
      if (o_data->count()) c.data = fc.data;
      if (o_schema->count()) c.schema = fc.schema;
      if (o_tree->count()) c.tree = fc.tree;
      if (o_model->count()) c.model = fc.model;
      if (o_lik->count()) c.likelihood = fc.likelihood;
      if (o_chains->count()) c.chains = fc.chains;
      if (o_warm->count()) c.warmup = fc.warmup;
      if (o_iters->count()) c.iters = fc.iters;
      if (o_seed->count()) c.seed = fc.seed;
      if (o_out->count()) c.out = fc.out;
      if (o_ta->count()) c.target_accept = fc.target_accept;
      if (o_md->count()) c.max_depth = fc.max_depth;
      if (o_plots->count()) c.emit_plots = fc.emit_plots;
      return cmd_fit(c);
    });
  }
  if (sim->parsed()) {
    return guarded([&] {
      SimConfig c;
      if (!sim_config.empty()) {
        const json j = json::parse(read_text(sim_config));
        for (const auto& [k, v] : j.items()) {
          if (k == "params") c.params = v.get<std::string>();
          else if (k == "model") c.model = v.get<std::string>();
          else if (k == "likelihood") c.likelihood = v.get<std::string>();
          else if (k == "ntips") c.ntips = v.get<int>();
          else if (k == "tree") c.tree = v.get<std::string>();
          else if (k == "cut_depth") c.cut_depth = v.get<double>();
          else if (k == "seed") c.seed = v.get<std::uint64_t>();
          else if (k == "out") c.out = v.get<std::string>();
          else throw ValidationError("unknown config key '" + k + "'");
        }
      }
      if (s_params->count()) c.params = sc.params;
      if (s_model->count()) c.model = sc.model;
      if (s_lik->count()) c.likelihood = sc.likelihood;
      if (s_ntips->count()) c.ntips = sc.ntips;
      if (s_tree->count()) c.tree = sc.tree;
      if (s_cut->count()) c.cut_depth = sc.cut_depth;
      if (s_seed->count()) c.seed = sc.seed;
      if (s_out->count()) c.out = sc.out;
      return cmd_simulate(c);
    });
  }
  if (cmp->parsed()) return guarded([&] { return cmd_compare(runs, cmp_out, cmp_ref); });
  return guarded([&] {
    emit_plot(plot_run, plot_kind, plot_out.empty() ? fs::path(plot_run) / "plots" : fs::path(plot_out));
    return static_cast<int>(kOk);
  });
}

}  // namespace phylocorr::cli
