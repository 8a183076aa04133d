#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sole/evalkit.hpp"
#include "sole/evalstats.hpp"
#include "sole/featuretable.hpp"
#include "sole/forest.hpp"
#include "sole/serialize.hpp"
#include "sole/service.hpp"
#include "sole/synthgen.hpp"

namespace fs = std::filesystem;
using namespace sole;

namespace {

void fail_json(const std::string& code, const std::string& message) {
  std::cerr << Json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot write " + path);
  os << text;
}

/// Writes to `path`, or stdout when empty.
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw IOError("cannot write " + path);
  fn(os);
}

std::vector<Scenario> parse_scenarios(const std::vector<std::string>& names) {
  std::vector<Scenario> out;
  for (const auto& n : names) out.push_back(parse_scenario(n));
  return out;
}

struct PairFlags {
  std::string q, k;
  std::string scenario;
  std::string partial;
  std::string foot = "L";
  bool reflect_k = false;
  std::uint64_t seed = 0;
  int darkness = kDefaultDarknessThreshold;
  unsigned threads = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--q", q, "query image (Q)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--k", k, "reference image (K)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--scenario", scenario, "scenario of the pair; partial scenarios cut Q");
    cmd->add_option("--partial", partial, "cut Q to a region: toe, heel, inside, outside");
    cmd->add_option("--foot", foot, "foot of Q for inside/outside cuts (L or R)");
    cmd->add_flag("--reflect-k", reflect_k, "mirror K before alignment");
    cmd->add_option("--seed", seed, "alignment seed");
    cmd->add_option("--darkness", darkness, "edge darkness threshold");
    cmd->add_option("--threads", threads, "alignment worker threads");
  }

  std::optional<Scenario> scenario_value() const {
    return scenario.empty() ? std::nullopt : std::optional<Scenario>(parse_scenario(scenario));
  }

  PairImages images() const {
    PairImages p{load_gray(q), load_gray(k), std::nullopt, reflect_k};
    if (!partial.empty()) p.partial = PartialSpec{parse_region(partial), parse_foot(foot)};
    else if (const auto s = scenario_value(); s && partial_region_of(*s))
      p.partial = PartialSpec{*partial_region_of(*s), parse_foot(foot)};
    return p;
  }

  PipelineConfig config() const {
    PipelineConfig cfg;
    cfg.darkness_threshold = darkness;
    cfg.icp.seed = seed;
    cfg.icp.threads = threads;
    return cfg;
  }
};

struct ForestFlags {
  int trees = 0;
  int max_depth = -1;
  int min_split = 0;
  int min_leaf = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--trees", trees, "number of trees (overrides the default)");
    cmd->add_option("--max-depth", max_depth, "maximum tree depth; 0 for unlimited");
    cmd->add_option("--min-samples-split", min_split, "minimum samples to split a node");
    cmd->add_option("--min-samples-leaf", min_leaf, "minimum samples per leaf");
  }

  ForestParams apply(ForestParams p) const {
    if (trees > 0) p.n_trees = trees;
    if (max_depth == 0) p.max_depth.reset();
    else if (max_depth > 0) p.max_depth = max_depth;
    if (min_split > 0) p.min_samples_split = min_split;
    if (min_leaf > 0) p.min_samples_leaf = min_leaf;
    p.validate();
    return p;
  }
};

void set_spec_from_json(SynthSpec& spec, const Json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("canvas_width", spec.canvas_width);
  get("canvas_height", spec.canvas_height);
  get("period", spec.period);
  get("rac_count", spec.rac_count);
  get("rac_min_radius", spec.rac_min_radius);
  get("rac_max_radius", spec.rac_max_radius);
  get("wear_patches", spec.wear_patches);
  get("wear_patch_min_radius", spec.wear_patch_min_radius);
  get("wear_patch_max_radius", spec.wear_patch_max_radius);
  get("jitter_sigma", spec.jitter_sigma);
  get("rotation_jitter_deg", spec.rotation_jitter_deg);
  get("blur_sigma_per_level", spec.blur_sigma_per_level);
  get("contrast_width", spec.contrast_width);
  get("rac_erosion_per_level", spec.rac_erosion_per_level);
  get("salt_density", spec.salt_density);
  get("seed", spec.seed);
  if (j.contains("families")) {
    spec.families.clear();
    for (const auto& f : j.at("families")) spec.families.push_back(parse_tread_family(f.get<std::string>()));
  }
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shoeprint pair comparison: alignment, similarity features and random forest scoring"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "edge points of an outsole image as x,y CSV");
  std::string ex_image, ex_out;
  int ex_darkness = kDefaultDarknessThreshold;
  extract->add_option("image", ex_image)->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--out", ex_out, "output CSV (stdout when omitted)");
  extract->add_option("--darkness", ex_darkness, "edge darkness threshold");

  // align
  auto* align_cmd = app.add_subcommand("align", "align K onto Q; prints the rigid transform as JSON");
  std::string al_q, al_k;
  IcpConfig al_cfg;
  bool al_candidates = false;
  align_cmd->add_option("q_points", al_q, "Q points CSV")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("k_points", al_k, "K points CSV")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--seed", al_cfg.seed, "downsampling seed");
  align_cmd->add_option("--threads", al_cfg.threads, "candidate worker threads");
  align_cmd->add_option("--max-iterations", al_cfg.max_iterations, "ICP iteration cap");
  align_cmd->add_flag("--candidates", al_candidates, "include every candidate run");

  // features
  auto* features = app.add_subcommand("features", "feature row for an image pair");
  PairFlags fe;
  fe.add(features);
  int fe_label = -1;
  std::string fe_out, fe_pair_id, fe_q_shoe, fe_k_shoe;
  bool fe_json = false;
  features->add_option("--label", fe_label, "ground truth (1 mated, 0 non-mated) to write a training row");
  features->add_option("--pair-id", fe_pair_id);
  features->add_option("--q-shoe", fe_q_shoe);
  features->add_option("--k-shoe", fe_k_shoe);
  features->add_option("-o,--out", fe_out, "output CSV (stdout when omitted)");
  features->add_flag("--json", fe_json, "print JSON instead of CSV");

  // train
  auto* train = app.add_subcommand("train", "fit a random forest to a feature CSV");
  std::string tr_in, tr_out, tr_grid = "default", tr_cv_out;
  int tr_folds = 5;
  std::uint64_t tr_seed = 0;
  unsigned tr_threads = 1;
  bool tr_indicators = false;
  ForestFlags tr_forest;
  train->add_option("features", tr_in)->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", tr_out, "model JSON path")->required();
  train->add_option("--grid", tr_grid, "hyperparameters: 'default' or a 'full' 144-point CV grid search")
      ->check(CLI::IsMember({"default", "full"}));
  train->add_option("--folds", tr_folds, "cross-validation folds for --grid full");
  train->add_option("--seed", tr_seed);
  train->add_option("--threads", tr_threads);
  train->add_option("--cv-report", tr_cv_out, "write the grid search table as JSON");
  train->add_flag("--indicators", tr_indicators, "append scenario category indicator columns");
  tr_forest.add(train);

  // predict
  auto* predict = app.add_subcommand("predict", "posterior probability that a pair is mated");
  PairFlags pr;
  pr.add(predict);
  std::string pr_model;
  predict->add_option("--model", pr_model)->required()->check(CLI::ExistingFile);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "accuracy, AUC and operating point of a model on a feature CSV");
  std::string ev_model, ev_in;
  evaluate_cmd->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("features", ev_in)->required()->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic outsole corpus with registry.csv");
  std::string sy_out, sy_config;
  CorpusPlan sy_plan;
  sy_plan.blur_levels = {2, 6, 10};
  std::uint64_t sy_seed = 0;
  bool sy_seed_set = false;
  unsigned sy_threads = 1;
  synth->add_option("-o,--out", sy_out, "output directory")->required();
  synth->add_option("--config", sy_config, "generator settings JSON")->check(CLI::ExistingFile);
  synth->add_option("--shoes", sy_plan.shoes);
  synth->add_option("--models", sy_plan.models);
  synth->add_option("--sizes", sy_plan.sizes);
  synth->add_option("--replicates", sy_plan.replicates);
  synth->add_option("--blur", sy_plan.blur_levels, "blur levels captured besides blur 0");
  synth->add_option("--visits", sy_plan.visits);
  synth->add_flag("--both-feet", sy_plan.both_feet);
  synth->add_option("--seed", sy_seed)->each([&](const std::string&) { sy_seed_set = true; });
  synth->add_option("--threads", sy_threads);

  // experiment
  auto* experiment = app.add_subcommand("experiment", "train and evaluate the regime x scenario matrix");
  std::string xp_registry, xp_out, xp_train_csv, xp_test_csv;
  std::vector<std::string> xp_regimes, xp_scenarios = {"PristineAN", "Blurry02", "Blurry06", "Blurry10", "PartialToe",
                                                        "PartialHeel"};
  double xp_fraction = 0.7;
  std::uint64_t xp_seed = 0;
  unsigned xp_threads = 1;
  ForestFlags xp_forest;
  experiment->add_option("--registry", xp_registry, "registry CSV; image paths are relative to its directory")
      ->check(CLI::ExistingFile);
  experiment->add_option("--train-features", xp_train_csv, "use this training feature CSV instead of a registry")
      ->check(CLI::ExistingFile);
  experiment->add_option("--test-features", xp_test_csv, "use this test feature CSV instead of a registry")
      ->check(CLI::ExistingFile);
  experiment->add_option("-o,--out", xp_out, "report directory")->required();
  experiment->add_option("--regime", xp_regimes, "regimes to run (default: all)");
  experiment->add_option("--scenarios", xp_scenarios, "scenarios to pair from the registry");
  experiment->add_option("--train-fraction", xp_fraction);
  experiment->add_option("--seed", xp_seed);
  experiment->add_option("--threads", xp_threads);
  xp_forest.add(experiment);

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP API and UI");
  ServiceConfig sv;
  sv.apply_environment();
  serve->add_option("--port", sv.port);
  serve->add_option("--host", sv.host);
  serve->add_option("--model-dir", sv.model_dir);
  serve->add_option("--population-dir", sv.population_dir);
  serve->add_option("--static-dir", sv.static_dir);
  serve->add_option("--workers", sv.workers);
  serve->add_option("--queue", sv.queue_limit);
  serve->add_option("--seed", sv.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fail_json("UsageError", e.what());
    return 2;
  }

  try {
    if (*extract) {
      const PointCloud cloud = extract_points(edge_detect(load_gray(ex_image)), ex_darkness);
      emit(ex_out, [&](std::ostream& os) { write_points_csv(os, cloud); });
    } else if (*align_cmd) {
      const AlignmentResult a = align(read_points_csv(al_q), read_points_csv(al_k), al_cfg);
      std::cout << to_json(a, al_candidates).dump(2) << '\n';
    } else if (*features) {
      const PairResult r = featurize(fe.images(), fe.config());
      if (fe_json) {
        std::cout << Json{{"transform", to_json(r.alignment.transform)}, {"features", to_json(r.features)}}.dump(2)
                  << '\n';
      } else {
        FeatureRow row;
        row.features = r.features;
        row.label = std::max(fe_label, 0);
        row.scenario = fe.scenario_value().value_or(Scenario::PristineAN);
        row.pair_id = fe_pair_id.empty() ? fs::path(fe.q).stem().string() + ":" + fs::path(fe.k).stem().string()
                                         : fe_pair_id;
        row.q_shoe_id = fe_q_shoe.empty() ? fs::path(fe.q).stem().string() : fe_q_shoe;
        row.k_shoe_id = fe_k_shoe.empty() ? fs::path(fe.k).stem().string() : fe_k_shoe;
        emit(fe_out, [&](std::ostream& os) { write_feature_csv(os, {row}); });
      }
    } else if (*train) {
      const Dataset data = to_dataset(read_feature_csv(tr_in), tr_indicators);
      ForestParams params = tr_forest.apply(default_forest_params());
      Json summary{{"rows", data.size()}, {"columns", data.width()}, {"grid", tr_grid}};
      if (tr_grid == "full") {
        const HyperGrid grid;
        const GridSearchResult gs = grid_search_cv(data, grid, tr_folds, tr_seed, tr_threads);
        params = gs.best;
        summary["configurations"] = gs.table.size();
        summary["cv_accuracy"] = gs.best_accuracy;
        if (!tr_cv_out.empty()) {
          Json table = Json::array();
          for (const auto& e : gs.table)
            table.push_back({{"params", to_json(e.params)}, {"fold_accuracy", e.fold_accuracy},
                             {"mean_accuracy", e.mean_accuracy}});
          write_text(tr_cv_out, table.dump(2) + "\n");
        }
      }
      ForestModel model = train_forest(data, params, tr_seed, tr_threads);
      model.indicator_columns = tr_indicators;
      save_model(tr_out, model);
      summary["hyperparams"] = to_json(params);
      summary["oob_score"] = optional_json(model.oob_score);
      std::cout << summary.dump(2) << '\n';
    } else if (*predict) {
      const ForestModel model = load_model(pr_model);
      const PairResult r = featurize(pr.images(), pr.config());
      const double p = model.predict(model_input(r.features, pr.scenario_value(), model.indicator_columns));
      std::cout << Json{{"posterior", p}}.dump() << '\n';
    } else if (*evaluate_cmd) {
      const ForestModel model = load_model(ev_model);
      const auto rows = read_feature_csv(ev_in);
      std::cout << to_json(evaluate(model, to_dataset(rows, model.indicator_columns))).dump(2) << '\n';
    } else if (*synth) {
      SynthSpec spec;
      if (!sy_config.empty()) set_spec_from_json(spec, read_json_file(sy_config));
      if (sy_seed_set) spec.seed = sy_seed;
      const SynthCorpus corpus = generate_corpus(spec, sy_plan, sy_threads);
      write_corpus(corpus, sy_out);
      std::cout << Json{{"images", corpus.records.size()}, {"registry", (fs::path(sy_out) / "registry.csv").string()}}
                       .dump()
                << '\n';
    } else if (*experiment) {
      std::vector<FeatureRow> train_rows, test_rows;
      Json notes = Json::array();
      fs::create_directories(xp_out);
      if (!xp_train_csv.empty() || !xp_test_csv.empty()) {
        if (xp_train_csv.empty() || xp_test_csv.empty())
          throw ConfigError("--train-features and --test-features go together");
        train_rows = read_feature_csv(xp_train_csv);
        test_rows = read_feature_csv(xp_test_csv);
      } else {
        if (xp_registry.empty()) throw ConfigError("experiment needs --registry or feature CSVs");
        const auto records = read_registry(xp_registry);
        const ShoeSplit split = split_by_shoe(records, xp_fraction, xp_seed);
        const SplitFeatures sf =
            featurize_split(records, parse_scenarios(xp_scenarios), split,
                            directory_loader(fs::path(xp_registry).parent_path().string()), PipelineConfig{}, xp_seed,
                            xp_threads);
        for (const auto& n : sf.notes) notes.push_back(n);
        for (const auto& f : sf.failures) notes.push_back(f.pair_id + ": " + f.code + ": " + f.message);
        train_rows = sf.train;
        test_rows = sf.test;
        write_feature_csv((fs::path(xp_out) / "features_train.csv").string(), train_rows);
        write_feature_csv((fs::path(xp_out) / "features_test.csv").string(), test_rows);
      }
      ExperimentConfig cfg;
      if (!xp_regimes.empty()) {
        cfg.regimes.clear();
        for (const auto& r : xp_regimes) cfg.regimes.push_back(parse_regime(r));
      }
      cfg.params = xp_forest.apply(cfg.params);
      cfg.seed = xp_seed;
      cfg.threads = xp_threads;
      const ExperimentReport rep = run_experiment_matrix(train_rows, test_rows, cfg);
      Json report = to_json(rep);
      report["notes"] = notes;
      write_text((fs::path(xp_out) / "report.json").string(), report.dump(2) + "\n");
      emit((fs::path(xp_out) / "accuracy.csv").string(), [&](std::ostream& os) { write_accuracy_csv(os, rep); });
      emit((fs::path(xp_out) / "emd_mated.csv").string(), [&](std::ostream& os) { write_emd_csv(os, rep.emd_mated); });
      emit((fs::path(xp_out) / "emd_non_mated.csv").string(),
           [&](std::ostream& os) { write_emd_csv(os, rep.emd_non_mated); });
      fs::create_directories(fs::path(xp_out) / "models");
      for (const auto& [key, model] : rep.models) {
        std::string file = key;
        std::replace(file.begin(), file.end(), ':', '_');
        save_model((fs::path(xp_out) / "models" / (file + ".json")).string(), model);
      }
      std::cout << Json{{"models_trained", rep.models.size()}, {"cells", rep.cells.size()}, {"accuracy", report["accuracy"]}}
                       .dump(2)
                << '\n';
    } else if (*serve) {
      PairService service(sv);
      httplib::Server server;
      install_routes(server, service);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << Json{{"listening", sv.host + ":" + std::to_string(sv.port)}, {"models", service.models().ids()}}.dump()
                << '\n';
      if (!server.listen(sv.host, sv.port)) throw IOError("cannot listen on " + sv.host + ":" + std::to_string(sv.port));
      g_server = nullptr;
    }
  } catch (const Error& e) {
    fail_json(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail_json("InternalError", e.what());
    return 1;
  }
  return 0;
}
