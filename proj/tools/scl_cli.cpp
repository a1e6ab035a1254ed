// Command-line driver for dataset generation, training, interventions,
// evaluation, the elicitation service and result export.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "scl/errors.hpp"
#include "scl/evaluation.hpp"
#include "scl/interventions.hpp"
#include "scl/model.hpp"
#include "scl/service.hpp"
#include "scl/soft_labels.hpp"
#include "scl/toy.hpp"
#include "scl/umnist.hpp"

#ifndef SCL_VERSION
#define SCL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scl;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw NotFoundError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_config(const fs::path& out, const std::string& command, std::uint64_t seed, json args) {
  fs::create_directories(out);
  write_json(out / "config.json", {{"command", command},
                                   {"version", SCL_VERSION},
                                   {"seed", seed},
                                   {"args", std::move(args)}});
}

std::vector<SoftGroupAnnotation> read_annotation_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read annotation log " + path.string());
  std::vector<SoftGroupAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(SoftGroupAnnotation::from_json(rec.contains("annotation") ? rec["annotation"] : rec));
  }
  return out;
}

// Options shared by the commands that run interventions.
struct InterventionArgs {
  std::string model;
  std::string data;
  std::string policy = "random";
  std::string granularity;  // defaults by schema
  std::string source = "truth";
  std::string annotations;
  double rho = 0.7;
  double guessing = 0.5;
  std::string mode = "broad";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t limit = 0;
  std::string out;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--model", model, "Model checkpoint (.scl)")->required();
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--policy", policy, "random | skyline")->check(CLI::IsMember({"random", "skyline"}));
    cmd->add_option("--granularity", granularity, "concept | group (default: group for categorical schemas)")
        ->check(CLI::IsMember({"concept", "group"}));
    cmd->add_option("--source", source, "truth | dataset | coarse | population | elicited")
        ->check(CLI::IsMember({"truth", "dataset", "coarse", "population", "elicited"}));
    cmd->add_option("--annotations", annotations, "Annotation log for --source elicited");
    cmd->add_option("--probably-rho", rho, "Confidence imputed for 'probably'");
    cmd->add_option("--guessing-rho", guessing, "Confidence imputed for 'guessing'");
    cmd->add_option("--mode", mode, "broad | narrow")->check(CLI::IsMember({"broad", "narrow"}));
    cmd->add_option("--seed", seed, "Seed of the random policy");
    cmd->add_option("--threads", threads, "Worker threads");
    cmd->add_option("--limit", limit, "Use only the first N samples (0 = all)");
    cmd->add_option("--out", out, "Output directory")->required();
  }

  json to_json() const {
    return {{"model", model},       {"data", data},         {"policy", policy},
            {"granularity", granularity}, {"source", source}, {"annotations", annotations},
            {"probably_rho", rho},  {"guessing_rho", guessing}, {"mode", mode},
            {"seed", seed},         {"threads", threads},   {"limit", limit}};
  }
};

struct InterventionSetup {
  ConceptModel model;
  ConceptDataset ds;
  InterventionSource source;
  UnitSet units;
};

InterventionSetup prepare(const InterventionArgs& a) {
  InterventionSetup s;
  s.model = ConceptModel::load(a.model);
  s.ds = load_dataset(a.data);
  if (a.limit > 0 && a.limit < s.ds.size()) {
    std::vector<std::size_t> rows(a.limit);
    for (std::size_t i = 0; i < a.limit; ++i) rows[i] = i;
    s.ds = s.ds.subset(rows);
  }
  if (a.source == "truth") {
    s.source = truth_source(s.ds);
  } else if (a.source == "dataset") {
    s.source = concept_source(s.ds);
  } else if (a.source == "coarse" || a.source == "population") {
    CertaintyMap gamma{.guessing = a.guessing, .probably = a.rho};
    auto relabeled = apply_coarse_labels(s.ds, gamma, parse_spread_mode(a.mode));
    if (a.source == "population") relabeled = apply_population_labels(relabeled);
    s.source = concept_source(relabeled, a.source);
  } else {
    if (a.annotations.empty()) throw ConfigError("--source elicited needs --annotations");
    const auto annotations = read_annotation_log(a.annotations);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < s.ds.size(); ++i) ids.push_back(std::to_string(i));
    s.source = source_from_annotations(s.ds.schema, ids, annotations);
  }
  Granularity g = Granularity::concept_level;
  if (!a.granularity.empty()) {
    g = parse_granularity(a.granularity);
  } else {
    const bool categorical = std::any_of(s.ds.schema.groups().begin(), s.ds.schema.groups().end(),
                                         [](const ConceptGroup& grp) { return grp.attributes.size() > 1; });
    g = categorical ? Granularity::group_level : Granularity::concept_level;
  }
  s.units = make_units(g, s.model.k(), &s.ds.schema);
  return s;
}

void print_json_line(const json& j) { std::cout << j.dump() << std::endl; }

Service* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-bottleneck toolkit: datasets, training, interventions, evaluation, elicitation service"};
  app.set_version_flag("--version", SCL_VERSION);
  app.require_subcommand(1);

  // gen-umnist
  std::string mnist_dir, split = "train", out;
  UMnistOptions um;
  std::string concept_noise = "uniform";
  auto* gen_umnist_cmd = app.add_subcommand("gen-umnist", "Generate a UMNIST dataset from MNIST IDX files");
  gen_umnist_cmd->add_option("--mnist-dir", mnist_dir, "Directory with MNIST IDX files")->required();
  gen_umnist_cmd->add_option("--split", split, "train | t10k")->check(CLI::IsMember({"train", "t10k"}));
  gen_umnist_cmd->add_option("--n", um.n, "Number of samples");
  gen_umnist_cmd->add_option("--p", um.p, "Digits per sample");
  gen_umnist_cmd->add_option("--delta", um.delta, "Concept uncertainty");
  gen_umnist_cmd->add_option("--seed", um.seed, "Seed");
  gen_umnist_cmd->add_option("--mask-fraction", um.mask_fraction, "Fraction of concepts without annotation");
  gen_umnist_cmd->add_option("--concept-noise", concept_noise, "uniform | fourvalue")
      ->check(CLI::IsMember({"uniform", "fourvalue"}));
  gen_umnist_cmd->add_option("--uncertain-value", um.uncertain_value, "Value of an 'uncertain' token (fourvalue)");
  gen_umnist_cmd->add_option("--out", out, "Output directory")->required();

  // gen-toy
  ToyOptions toy{.schema = default_toy_schema()};
  auto* gen_toy_cmd = app.add_subcommand("gen-toy", "Generate a categorical concept-group dataset");
  gen_toy_cmd->add_option("--n", toy.n, "Number of samples");
  gen_toy_cmd->add_option("--n-classes", toy.n_classes, "Number of classes");
  gen_toy_cmd->add_option("--noise", toy.noise, "Probability of a non-prototype attribute");
  gen_toy_cmd->add_option("--input-noise", toy.input_noise, "Gaussian input noise scale");
  gen_toy_cmd->add_option("--seed", toy.seed, "Sampling seed");
  gen_toy_cmd->add_option("--prototype-seed", toy.prototype_seed, "Seed of the class prototypes");
  gen_toy_cmd->add_option("--out", out, "Output directory")->required();

  // train
  std::string data, variant = "cbm", labels = "dataset", mode = "broad", name = "model";
  BottleneckConfig cfg;
  TrainOptions topt;
  double rho = 0.7, guessing = 0.5;
  std::size_t stride = 2;
  std::string padding = "same";
  std::uint64_t seed = 0;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a CBM or CEM jointly");
  train_cmd->add_option("--data", data, "Training dataset directory")->required();
  train_cmd->add_option("--variant", variant, "cbm | cem")->check(CLI::IsMember({"cbm", "cem"}));
  train_cmd->add_option("--alpha", cfg.alpha, "Concept-loss weight");
  train_cmd->add_option("--m", cfg.m, "CEM embedding size");
  train_cmd->add_option("--filters", cfg.conv_filters, "Conv filter counts (empty for an MLP backbone)");
  train_cmd->add_option("--stride", stride, "Conv stride");
  train_cmd->add_option("--padding", padding, "same | valid")->check(CLI::IsMember({"same", "valid"}));
  train_cmd->add_option("--width", cfg.backbone_width, "Backbone linear width");
  train_cmd->add_option("--head", cfg.head_widths, "Hidden widths of the label head");
  train_cmd->add_option("--lr", topt.adam.lr, "Adam learning rate");
  train_cmd->add_option("--batch", topt.batch_size, "Batch size");
  train_cmd->add_option("--epochs", topt.max_epochs, "Maximum epochs");
  train_cmd->add_option("--patience", topt.patience, "Early-stopping patience");
  train_cmd->add_option("--val-fraction", topt.val_fraction, "Validation fraction");
  train_cmd->add_option("--labels", labels, "dataset | coarse | population")
      ->check(CLI::IsMember({"dataset", "coarse", "population"}));
  train_cmd->add_option("--probably-rho", rho, "Confidence imputed for 'probably'");
  train_cmd->add_option("--guessing-rho", guessing, "Confidence imputed for 'guessing'");
  train_cmd->add_option("--mode", mode, "broad | narrow")->check(CLI::IsMember({"broad", "narrow"}));
  train_cmd->add_option("--seed", seed, "Seed");
  train_cmd->add_option("--name", name, "Model file stem");
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress");
  train_cmd->add_option("--out", out, "Output directory")->required();

  // intervene / eval-curve
  InterventionArgs iv_args, curve_args;
  auto* intervene_cmd = app.add_subcommand("intervene", "Run an intervention policy and write per-sample traces");
  iv_args.add_to(intervene_cmd);
  auto* curve_cmd = app.add_subcommand("eval-curve", "Intervention-accuracy curve and its AUC");
  curve_args.add_to(curve_cmd);

  // eval-calibration
  std::string model_path, what = "concepts", annotations, reference = "sample";
  std::size_t bins = 10;
  auto* calib_cmd = app.add_subcommand("eval-calibration", "Calibration curve and ECE");
  calib_cmd->add_option("--what", what, "concepts | task | annotations")
      ->check(CLI::IsMember({"concepts", "task", "annotations"}));
  calib_cmd->add_option("--model", model_path, "Model checkpoint (concepts, task)");
  calib_cmd->add_option("--data", data, "Dataset directory")->required();
  calib_cmd->add_option("--annotations", annotations, "Annotation log (annotations)");
  calib_cmd->add_option("--reference", reference, "sample | class-average ground truth for annotations")
      ->check(CLI::IsMember({"sample", "class-average"}));
  calib_cmd->add_option("--bins", bins, "Number of equal-width bins");
  calib_cmd->add_option("--out", out, "Output directory")->required();

  // serve
  ServiceOptions sopt;
  auto* serve_cmd = app.add_subcommand("serve", "Run the elicitation service");
  serve_cmd->add_option("--host", sopt.host, "Bind address");
  serve_cmd->add_option("--port", sopt.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--models-dir", sopt.models_dir, "Directory of model checkpoints");
  serve_cmd->add_option("--stimuli-dir", sopt.stimuli_dir, "Dataset directory of stimuli")->required();
  serve_cmd->add_option("--log-path", sopt.log_path, "Annotation log (JSON Lines)");
  serve_cmd->add_option("--cors-origin", sopt.cors_origin, "Access-Control-Allow-Origin value");

  // export
  std::vector<std::string> runs;
  std::string keep_file;
  auto* export_cmd = app.add_subcommand("export", "Collate run outputs into plotting CSVs");
  export_cmd->add_option("--runs", runs, "Run directories containing curve.json or calibration.json");
  export_cmd->add_option("--annotations", annotations, "Annotation log to summarize");
  export_cmd->add_option("--keep", keep_file, "File with one kept 'group::attribute' per line");
  export_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }

  try {
    if (*gen_umnist_cmd) {
      um.noise = parse_concept_noise(concept_noise);
      const fs::path dir(mnist_dir);
      auto store = MnistStore::load(dir / (split + "-images-idx3-ubyte"), dir / (split + "-labels-idx1-ubyte"));
      auto ds = gen_umnist(store, um);
      ds.provenance["mnist_split"] = split;
      save_dataset(ds, out);
      write_config(out, "gen-umnist", um.seed,
                   {{"mnist_dir", mnist_dir}, {"split", split}, {"n", um.n}, {"p", um.p},
                    {"delta", um.delta}, {"mask_fraction", um.mask_fraction},
                    {"concept_noise", concept_noise}, {"uncertain_value", um.uncertain_value}});
      print_json_line({{"dataset", out}, {"n", ds.size()}});
    } else if (*gen_toy_cmd) {
      auto ds = gen_categorical_toy(toy);
      save_dataset(ds, out);
      write_config(out, "gen-toy", toy.seed,
                   {{"n", toy.n}, {"n_classes", toy.n_classes}, {"noise", toy.noise},
                    {"input_noise", toy.input_noise}, {"certainty_probs", toy.certainty_probs},
                    {"prototype_seed", toy.prototype_seed}, {"schema", toy.schema.to_json()}});
      print_json_line({{"dataset", out}, {"n", ds.size()}});
    } else if (*train_cmd) {
      auto ds = load_dataset(data);
      if (labels != "dataset") {
        CertaintyMap gamma{.guessing = guessing, .probably = rho};
        ds = apply_coarse_labels(ds, gamma, parse_spread_mode(mode));
        if (labels == "population") ds = apply_population_labels(ds);
      }
      cfg.variant = parse_variant(variant);
      cfg.k = ds.concept_count();
      cfg.n_classes = ds.n_classes;
      cfg.input_shape = ds.sample_shape;
      if (ds.sample_shape.size() != 3) cfg.conv_filters.clear();
      cfg.conv.stride = stride;
      cfg.conv.padding = padding == "same" ? ops::Padding::same : ops::Padding::valid;
      topt.seed = seed;
      if (!quiet) {
        topt.on_epoch = [](const json& j) { std::cerr << j.dump() << std::endl; };
      }
      ConceptModel model(cfg, seed);
      model.provenance = {{"dataset", data},
                          {"dataset_provenance", ds.provenance},
                          {"delta", ds.provenance.value("delta", json(nullptr))},
                          {"rho", labels == "dataset" ? json(nullptr) : json(rho)},
                          {"labels", labels},
                          {"mode", labels == "dataset" ? json(nullptr) : json(mode)},
                          {"seed", seed},
                          {"schema", ds.schema.to_json()}};
      auto result = train(model, ds, topt);
      for (const auto& w : result.warnings) std::cerr << json{{"warning", w}}.dump() << std::endl;
      fs::create_directories(out);
      const fs::path ckpt = fs::path(out) / (name + ".scl");
      model.save(ckpt);
      write_config(out, "train", seed,
                   {{"data", data}, {"config", cfg.to_json()}, {"lr", topt.adam.lr},
                    {"batch", topt.batch_size}, {"epochs", topt.max_epochs}, {"patience", topt.patience},
                    {"val_fraction", topt.val_fraction}, {"labels", labels}, {"probably_rho", rho},
                    {"guessing_rho", guessing}, {"mode", mode}, {"name", name}});
      print_json_line({{"model", ckpt.string()},
                       {"best_epoch", result.best_epoch},
                       {"epochs", result.epochs.size()},
                       {"concept_accuracy", concept_accuracy(model, ds)},
                       {"task_accuracy", task_accuracy(model, ds)}});
    } else if (*intervene_cmd || *curve_cmd) {
      const bool traces_only = intervene_cmd->parsed();
      const auto& a = traces_only ? iv_args : curve_args;
      auto setup = prepare(a);
      std::vector<InterventionTrace> traces;
      CurveOptions copt{.policy = {.policy = parse_policy(a.policy), .seed = a.seed}, .threads = a.threads};
      auto curve = intervention_curve(setup.model, setup.ds, setup.source, setup.units, copt, &traces);
      write_config(a.out, traces_only ? "intervene" : "eval-curve", a.seed, a.to_json());
      const fs::path dir(a.out);
      if (traces_only) {
        std::ofstream csv(dir / "traces.csv");
        write_traces_csv(csv, traces);
        json units = json::array();
        for (std::size_t u = 0; u < setup.units.size(); ++u) units.push_back({{"unit_id", u}, {"name", setup.units.names[u]}});
        write_json(dir / "units.json", units);
        print_json_line({{"traces", (dir / "traces.csv").string()}, {"samples", traces.size()}});
      } else {
        std::ofstream csv(dir / "curve.csv");
        write_curve_csv(csv, curve);
        write_json(dir / "curve.json", curve.to_json());
        print_json_line({{"curve", (dir / "curve.csv").string()}, {"auc", curve_auc(curve.accuracies)}});
      }
    } else if (*calib_cmd) {
      auto ds = load_dataset(data);
      std::vector<double> conf;
      std::vector<int> outcome;
      if (what == "annotations") {
        if (annotations.empty()) throw ConfigError("--what annotations needs --annotations");
        std::vector<double> reference_bits = ds.truth;
        if (reference == "class-average") {
          std::vector<LabeledSoftVector> v;
          for (std::size_t i = 0; i < ds.size(); ++i) {
            auto t = ds.truth_of(i);
            v.push_back({ds.labels[i], std::vector<double>(t.begin(), t.end())});
          }
          const auto means = aggregate_population(v, ds.n_classes);
          for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& m = means[static_cast<std::size_t>(ds.labels[i])];
            std::copy(m.begin(), m.end(), reference_bits.begin() + static_cast<std::ptrdiff_t>(i * ds.concept_count()));
          }
        }
        const auto k = ds.concept_count();
        for (const auto& a : read_annotation_log(annotations)) {
          std::size_t row = 0;
          try {
            row = std::stoul(a.stimulus_id);
          } catch (const std::exception&) {
            throw DataError("annotation stimulus id '" + a.stimulus_id + "' is not a sample index");
          }
          if (row >= ds.size()) throw IndexError("annotation refers to missing sample " + a.stimulus_id);
          const auto g = ds.schema.group_index(a.group_id);
          const auto vals = masses_to_values(ds.schema, a);
          for (std::size_t j = 0; j < vals.size(); ++j) {
            conf.push_back(std::min(vals[j], 1.0));
            outcome.push_back(reference_bits[row * k + ds.schema.group_offset(g) + j] >= 0.5 ? 1 : 0);
          }
        }
      } else {
        if (model_path.empty()) throw ConfigError("--what " + what + " needs --model");
        auto model = ConceptModel::load(model_path);
        auto p = predict_dataset(model, ds);
        if (what == "concepts") {
          for (std::size_t i = 0; i < p.concept_probs.size(); ++i) {
            if (ds.mask[i] == 0.0) continue;
            conf.push_back(p.concept_probs[i]);
            outcome.push_back(ds.truth[i] >= 0.5 ? 1 : 0);
          }
        } else {
          const auto c = static_cast<std::size_t>(ds.n_classes);
          for (std::size_t i = 0; i < ds.size(); ++i) {
            conf.push_back(p.class_probs[i * c + static_cast<std::size_t>(p.predicted[i])]);
            outcome.push_back(p.predicted[i] == ds.labels[i] ? 1 : 0);
          }
        }
      }
      auto report = calibration_curve(conf, outcome, bins);
      write_config(out, "eval-calibration", 0,
                   {{"what", what}, {"model", model_path}, {"data", data}, {"annotations", annotations},
                    {"reference", reference}, {"bins", bins}});
      std::ofstream csv(fs::path(out) / "calibration.csv");
      write_calibration_csv(csv, report);
      write_json(fs::path(out) / "calibration.json", report.to_json());
      print_json_line({{"ece", report.ece}, {"n", conf.size()}});
    } else if (*serve_cmd) {
      Service service(sopt);
      const int port = service.bind();
      write_json(sopt.log_path.string() + ".config.json",
                 {{"command", "serve"}, {"version", SCL_VERSION}, {"seed", 0},
                  {"args", {{"host", sopt.host}, {"port", port}, {"models_dir", sopt.models_dir},
                            {"stimuli_dir", sopt.stimuli_dir}, {"log_path", sopt.log_path},
                            {"cors_origin", sopt.cors_origin}}}});
      g_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      print_json_line({{"listening", port}, {"host", sopt.host}});
      service.listen();
      g_service = nullptr;
    } else if (*export_cmd) {
      fs::create_directories(out);
      std::ofstream curves(fs::path(out) / "curves.csv");
      curves.precision(17);
      curves << "run,policy,source,step,accuracy,mean_p_true\n";
      std::ofstream calib(fs::path(out) / "calibration.csv");
      calib.precision(17);
      calib << "run,bin,lower,upper,count,mean_confidence,accuracy\n";
      std::ofstream summary(fs::path(out) / "summary.csv");
      summary.precision(17);
      summary << "run,metric,value\n";
      for (const auto& run : runs) {
        const fs::path dir(run);
        if (fs::exists(dir / "curve.json")) {
          const auto c = read_json(dir / "curve.json");
          const auto& acc = c.at("accuracies");
          for (std::size_t s = 0; s < acc.size(); ++s) {
            curves << run << ',' << c.value("policy", "") << ',' << c.value("source", "") << ',' << s << ','
                   << acc[s].get<double>() << ',' << c.at("mean_p_true")[s].get<double>() << '\n';
          }
          summary << run << ",curve_auc," << c.at("auc").get<double>() << '\n';
        }
        if (fs::exists(dir / "calibration.json")) {
          const auto r = read_json(dir / "calibration.json");
          const auto& b = r.at("bins");
          for (std::size_t i = 0; i < b.size(); ++i) {
            calib << run << ',' << i << ',' << b[i]["lower"].get<double>() << ',' << b[i]["upper"].get<double>()
                  << ',' << b[i]["count"].get<std::size_t>() << ',' << b[i]["mean_confidence"].get<double>()
                  << ',' << b[i]["accuracy"].get<double>() << '\n';
          }
          summary << run << ",ece," << r.at("ece").get<double>() << '\n';
        }
      }
      if (!annotations.empty()) {
        std::optional<std::set<std::string>> keep;
        if (!keep_file.empty()) {
          std::ifstream in(keep_file);
          if (!in) throw NotFoundError("cannot read " + keep_file);
          keep.emplace();
          std::string line;
          while (std::getline(in, line)) {
            if (!line.empty()) keep->insert(line);
          }
        }
        const auto stats = annotation_stats(read_annotation_log(annotations), keep);
        write_json(fs::path(out) / "annotation_stats.json", stats.to_json());
        std::ofstream hist(fs::path(out) / "mass_histogram.csv");
        hist << "mass,count\n";
        for (std::size_t m = 0; m < stats.histogram.size(); ++m) hist << m << ',' << stats.histogram[m] << '\n';
      }
      write_config(out, "export", 0, {{"runs", runs}, {"annotations", annotations}, {"keep", keep_file}});
      print_json_line({{"export", out}});
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
