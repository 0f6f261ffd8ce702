// oodknn: command-line front end for OOD detector benchmarking.
//
//   oodknn eval       --manifest M [--detector knn|msp|both] [--k 5] ...
//   oodknn sweep-k    --manifest M [--k-list 1,2,5,...] ...
//   oodknn calibrate  --manifest M [--calib-emb F --calib-logits F] --out cal.json
//   oodknn score      --manifest M --embedding F [--logits F] [--calibration cal.json]
//   oodknn ingest-csv --in rows.csv --out rows.oodb [--kind embeddings|logits]
//   oodknn synth      --out-dir DIR [--seed N] ...
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oodknn/oodknn.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonOptions {
  std::string manifest;
  std::string detector = "both";
  std::size_t k = oodknn::kDefaultK;
  double target_tpr = oodknn::kDefaultTargetTpr;
  std::string format = "md";
  std::string out;
  unsigned threads = oodknn::default_threads();
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_detector, bool with_report) {
  cmd->add_option("--manifest", o.manifest, "Benchmark manifest (JSON)")->required();
  if (with_detector) {
    cmd->add_option("--detector", o.detector, "Detector: knn, msp or both")
        ->check(CLI::IsMember({"knn", "msp", "both"}));
  }
  cmd->add_option("--k", o.k, "Nearest neighbours for the KNN detector")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--target-tpr", o.target_tpr, "ID true-positive rate for thresholds")
      ->check(CLI::Range(0.0, 1.0));
  if (with_report) {
    cmd->add_option("--format", o.format, "Report format: csv, md or json")
        ->check(CLI::IsMember({"csv", "md", "markdown", "json"}));
  }
  cmd->add_option("--out", o.out, "Output path (stdout when omitted)");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Seed (recorded for reproducibility)");
}

oodknn::RunConfig to_config(const CommonOptions& o) {
  oodknn::RunConfig c;
  c.manifest = o.manifest;
  if (o.detector == "knn") {
    c.detectors = {oodknn::Detector::kKnn};
  } else if (o.detector == "msp") {
    c.detectors = {oodknn::Detector::kMsp};
  }
  c.k = o.k;
  c.target_tpr = o.target_tpr;
  c.format = oodknn::parse_format(o.format);
  c.threads = o.threads;
  c.seed = o.seed;
  return c;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    oodknn::detail::write_bytes(path, text);
  }
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> ks;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto token = s.substr(start, comma - start);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(token, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != token.size() || token.empty() || v == 0) {
      throw oodknn::ConfigError("--k-list: '" + token + "' is not a positive integer");
    }
    ks.push_back(static_cast<std::size_t>(v));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ks;
}

int run_eval(const CommonOptions& o) {
  const auto config = to_config(o);
  const auto report = oodknn::run_benchmark(config);
  if (o.out.empty()) {
    std::cout << oodknn::render_report(report, config.format);
  } else {
    oodknn::emit_report(report, config.format, o.out);
  }
  return 0;
}

int run_sweep(const CommonOptions& o, const std::string& k_list, const std::string& plot_out) {
  auto config = to_config(o);
  config.detectors = {oodknn::Detector::kKnn};
  if (!k_list.empty()) config.k_sweep = parse_k_list(k_list);
  const auto report = oodknn::sweep_k(config);
  if (o.out.empty()) {
    std::cout << oodknn::render_report(report, config.format);
  } else {
    oodknn::emit_report(report, config.format, o.out);
  }
  if (!plot_out.empty()) oodknn::detail::write_bytes(plot_out, oodknn::plot_data_csv(report));
  return 0;
}

std::optional<oodknn::Dataset> load_sample_set(const std::string& emb, const std::string& logits,
                                               const std::string& name) {
  if (emb.empty()) {
    if (!logits.empty()) throw oodknn::ConfigError(name + ": logits given without embeddings");
    return std::nullopt;
  }
  oodknn::Dataset ds;
  ds.name = name;
  ds.embeddings = oodknn::read_embedding_file(emb);
  if (!logits.empty()) {
    ds.logits = oodknn::align_logits(oodknn::read_logit_file(logits), ds.embeddings.ids(), name);
  }
  return ds;
}

int run_calibrate(const CommonOptions& o, const std::string& calib_emb,
                  const std::string& calib_logits) {
  const auto config = to_config(o);
  const auto manifest = oodknn::load_manifest(config.manifest);
  const auto held_out = load_sample_set(calib_emb, calib_logits, "calibration");
  const auto cal = oodknn::calibrate(manifest, config, held_out ? &*held_out : nullptr);
  write_output(o.out, oodknn::calibration_to_json(cal).dump(2) + "\n");
  return 0;
}

int run_score(const CommonOptions& o, const std::string& emb, const std::string& logits,
              const std::string& calibration_path) {
  const auto config = to_config(o);
  const auto manifest = oodknn::load_manifest(config.manifest);
  const auto sample = load_sample_set(emb, logits, "sample");
  if (!sample) throw oodknn::ConfigError("score: --embedding is required");

  oodknn::Calibration cal;
  if (calibration_path.empty()) {
    cal = oodknn::calibrate(manifest, config);
  } else {
    std::ifstream in(calibration_path);
    if (!in) throw oodknn::ConfigError("calibration file '" + calibration_path + "' not found");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw oodknn::ConfigError("calibration file '" + calibration_path + "': " + e.what());
    }
    cal = oodknn::calibration_from_json(j);
  }

  std::optional<oodknn::KnnIndex> index;
  if (config.uses(oodknn::Detector::kKnn)) index.emplace(manifest.id_train);

  std::string text = "id,detector,score,threshold,verdict\n";
  const auto& set = sample->embeddings;
  for (std::size_t i = 0; i < set.count(); ++i) {
    std::optional<std::span<const float>> row_logits;
    if (sample->logits) row_logits = sample->logits->row(i);
    const auto results = oodknn::score_single(config, cal, index ? &*index : nullptr, set.row(i),
                                              row_logits, set.id(i));
    for (const auto& r : results) {
      text += set.id(i) + "," + std::string(oodknn::to_string(r.score.detector)) + "," +
              oodknn::detail::full_precision(r.score.value) + "," +
              oodknn::detail::full_precision(r.threshold.value) + "," +
              std::string(oodknn::to_string(r.verdict)) + "\n";
    }
  }
  write_output(o.out, text);
  return 0;
}

int run_ingest(const std::string& in, const std::string& out, const std::string& kind) {
  if (kind == "logits") {
    oodknn::write_logit_file(oodknn::read_logit_file(in), out);
  } else {
    oodknn::write_embedding_file(oodknn::read_embedding_file(in), out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-distribution detection benchmark: MSP and KNN detectors"};
  app.require_subcommand(1);

  CommonOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "AUROC and FPR per detector and OOD set");
  add_common(eval, eval_opts, true, true);

  CommonOptions sweep_opts;
  std::string k_list;
  std::string plot_out;
  auto* sweep = app.add_subcommand("sweep-k", "KNN detector across neighbour counts");
  add_common(sweep, sweep_opts, false, true);
  sweep->add_option("--k-list", k_list, "Comma-separated k values (default 1,2,5,10,20,50,100,200)");
  sweep->add_option("--plot-out", plot_out, "Write (k, average FPR) plot data here");

  CommonOptions cal_opts;
  std::string calib_emb;
  std::string calib_logits;
  auto* calibrate = app.add_subcommand("calibrate", "Thresholds at the target ID TPR");
  add_common(calibrate, cal_opts, true, false);
  calibrate->add_option("--calib-emb", calib_emb, "Held-out calibration embeddings");
  calibrate->add_option("--calib-logits", calib_logits, "Held-out calibration logits");

  CommonOptions score_opts;
  std::string sample_emb;
  std::string sample_logits;
  std::string calibration;
  auto* score = app.add_subcommand("score", "Score samples and classify them as ID or OOD");
  add_common(score, score_opts, true, false);
  score->add_option("--embedding", sample_emb, "Sample embeddings (binary or .csv)")->required();
  score->add_option("--logits", sample_logits, "Sample logits (binary or .csv)");
  score->add_option("--calibration", calibration, "Calibration JSON from 'calibrate'");

  std::string ingest_in;
  std::string ingest_out;
  std::string ingest_kind = "embeddings";
  auto* ingest = app.add_subcommand("ingest-csv", "Convert a CSV set to the binary format");
  ingest->add_option("--in", ingest_in, "CSV input")->required();
  ingest->add_option("--out", ingest_out, "Binary output")->required();
  ingest->add_option("--kind", ingest_kind, "embeddings or logits")
      ->check(CLI::IsMember({"embeddings", "logits"}));

  oodknn::SyntheticOptions synth_opts;
  std::string synth_dir;
  bool no_logits = false;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic benchmark and manifest");
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--seed", synth_opts.seed, "PRNG seed");
  synth->add_option("--dim", synth_opts.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  synth->add_option("--n-train", synth_opts.n_train, "Training rows");
  synth->add_option("--n-test", synth_opts.n_test, "ID test rows");
  synth->add_option("--n-ood", synth_opts.n_ood, "Rows per OOD set");
  synth->add_option("--ood-sets", synth_opts.n_ood_sets, "Number of OOD sets");
  synth->add_option("--shift", synth_opts.shift, "OOD mean shift per coordinate, in sigma");
  synth->add_option("--classes", synth_opts.classes, "Logit classes");
  synth->add_flag("--no-logits", no_logits, "Skip logit files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*eval) return run_eval(eval_opts);
    if (*sweep) return run_sweep(sweep_opts, k_list, plot_out);
    if (*calibrate) return run_calibrate(cal_opts, calib_emb, calib_logits);
    if (*score) return run_score(score_opts, sample_emb, sample_logits, calibration);
    if (*ingest) return run_ingest(ingest_in, ingest_out, ingest_kind);
    if (*synth) {
      synth_opts.with_logits = !no_logits;
      const auto path = oodknn::write_synthetic(
          oodknn::make_synthetic(synth_opts), synth_dir,
          {{"generator", "synthetic gaussian"}, {"seed", std::to_string(synth_opts.seed)}});
      std::cout << path.string() << "\n";
      return 0;
    }
  } catch (const oodknn::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const oodknn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const oodknn::DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
