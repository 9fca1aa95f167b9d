#include "prefrank/cli.hpp"

#include <filesystem>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "prefrank/checkpoint.hpp"
#include "prefrank/curate.hpp"
#include "prefrank/data.hpp"
#include "prefrank/digest.hpp"
#include "prefrank/eval.hpp"
#include "prefrank/trainer.hpp"

namespace prefrank {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument:
    case ErrorCode::KTooLarge:
      return kExitConfig;
    case ErrorCode::DivergedLoss:
    case ErrorCode::NonFiniteParams:
      return kExitDiverged;
    default:
      return kExitData;
  }
}

json read_json_file(const fs::path& path, ErrorCode on_bad) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const Error& e) {
    throw Error(on_bad, e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(on_bad, path.string() + ": " + e.what());
  }
}

void emit(const std::optional<fs::path>& path, const std::string& text,
          std::ostream& out) {
  if (path) {
    write_file_bytes(*path, text);
  } else {
    out << text;
  }
}

struct TrainFlags {
  std::string data;
  std::string config;
  std::string out;
  std::string report;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> peak_lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss_kind;
  std::optional<std::string> strategy;
  std::optional<std::string> head_mode;
};

int cmd_gen_synth(const std::string& spec_path, const std::string& out_dir,
                  std::size_t tuples_per_k, std::ostream& out) {
  const json j = read_json_file(spec_path, ErrorCode::ParseError);
  const SyntheticSpec spec = synthetic_spec_from_json(j);
  const SyntheticDataset ds = gen_synthetic(spec);
  write_synthetic(out_dir, ds, tuples_per_k, spec.seed);
  json summary = {{"groups", ds.groups.size()},
                  {"candidates", ds.truth.size()},
                  {"out", out_dir}};
  out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  json cfg = json::object();
  if (!f.config.empty()) cfg = read_json_file(f.config, ErrorCode::InvalidConfig);
  if (!cfg.is_object()) {
    throw Error(ErrorCode::InvalidConfig, f.config + ": expected a JSON object");
  }
  if (f.epochs) cfg["epochs"] = *f.epochs;
  if (f.batch_size) cfg["batch_size"] = *f.batch_size;
  if (f.peak_lr) cfg["peak_lr"] = *f.peak_lr;
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.loss_kind) cfg["loss_kind"] = *f.loss_kind;
  if (f.strategy) cfg["strategy"] = *f.strategy;
  if (f.head_mode) cfg["head_mode"] = *f.head_mode;
  const TrainConfig config = train_config_from_json(cfg);

  auto groups = load_dataset_dir(f.data);
  auto [train_groups, val_groups] =
      split_validation(std::move(groups), config.validation_fraction);
  const TrainedModel model = train(train_groups, config, val_groups);
  save_checkpoint(model, f.out);

  json report = to_json(model.report);
  report["config"] = to_json(config);
  report["config_digest"] = digest_hex(model.config_digest);
  report["checkpoint_digest"] = digest_hex(checkpoint_digest(model));
  std::optional<fs::path> report_path;
  if (!f.report.empty()) report_path = f.report;
  emit(report_path, report.dump(2) + "\n", out);
  return kExitOk;
}

Scorer model_scorer(const TrainedModel& model,
                    std::span<const CheckedGroup> groups) {
  auto scores = std::make_shared<std::map<std::string, double>>();
  for (const auto& r : score_groups(model, groups, 0)) {
    (*scores)[r.candidate_id] = r.mu_agg;
  }
  return [scores](const std::string& id) {
    auto it = scores->find(id);
    if (it == scores->end()) {
      throw Error(ErrorCode::MissingCandidate, "no score for candidate " + id);
    }
    return it->second;
  };
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& tuples_path, double tie_margin,
             const std::string& out_path, std::ostream& out) {
  const TrainedModel model = load_checkpoint(ckpt);
  const auto groups = load_dataset_dir(data);
  std::optional<std::vector<RankTuple>> tuples;
  if (!tuples_path.empty() && fs::exists(tuples_path)) {
    tuples = read_tuples(tuples_path);
  }
  EvalConfig config;
  config.tie_margin = tie_margin;
  config.validate();
  const EvalReport report =
      evaluate(model_scorer(model, groups), groups, tuples ? &*tuples : nullptr,
               config, checkpoint_digest(model));
  std::optional<fs::path> path;
  if (!out_path.empty()) path = out_path;
  emit(path, to_json(report).dump(2) + "\n", out);
  return kExitOk;
}

int cmd_score(const std::string& ckpt, const std::string& data,
              const std::string& out_path, std::ostream& out) {
  const TrainedModel model = load_checkpoint(ckpt);
  const auto groups = load_dataset_dir(data);
  const auto records = score_groups(model, groups, checkpoint_digest(model));
  if (!out_path.empty()) {
    write_scored(out_path, records);
  } else {
    for (const auto& r : records) out << to_json(r).dump() << "\n";
  }
  return kExitOk;
}

int cmd_curate(const std::string& scores, const SelectionConfig& config,
               const std::string& out_path, std::ostream& out) {
  const auto records = read_scored(scores);
  const auto subset = select_topk(records, config);
  if (!out_path.empty()) {
    write_subset(out_path, subset, config);
  } else {
    for (const auto& r : subset) out << to_json(r, config).dump() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Multi-dimensional preference reward head toolkit", "prefrank"};
  app.require_subcommand(1);

  std::string spec_path, synth_out;
  std::size_t tuples_per_k = 2;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--tuples-per-k", tuples_per_k,
                  "Ranked tuples per group for each K in 2..4");

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "Train the reward head");
  tr->add_option("--data", tf.data, "Dataset directory")->required();
  tr->add_option("--config", tf.config, "Training config JSON");
  tr->add_option("--out", tf.out, "Checkpoint path")->required();
  tr->add_option("--report", tf.report, "Report path (default: stdout)");
  tr->add_option("--epochs", tf.epochs);
  tr->add_option("--batch-size", tf.batch_size);
  tr->add_option("--peak-lr", tf.peak_lr);
  tr->add_option("--seed", tf.seed);
  tr->add_option("--loss-kind", tf.loss_kind);
  tr->add_option("--strategy", tf.strategy);
  tr->add_option("--head-mode", tf.head_mode);

  std::string ckpt, data, tuples_path, eval_out;
  double tie_margin = 0.0;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--tuples", tuples_path, "Ranked tuples JSONL");
  ev->add_option("--tie-margin", tie_margin, "Tie margin on mu_agg");
  ev->add_option("--out", eval_out, "Report path (default: stdout)");

  std::string score_ckpt, score_data, score_out;
  auto* sc = app.add_subcommand("score", "Score every candidate of a dataset");
  sc->add_option("--ckpt", score_ckpt, "Checkpoint path")->required();
  sc->add_option("--data", score_data, "Dataset directory")->required();
  sc->add_option("--out", score_out, "Scored JSONL (default: stdout)");

  std::string scores_path, curate_out, mode = "mean";
  SelectionConfig sel;
  auto* cu = app.add_subcommand("curate", "Select the top-K scored candidates");
  cu->add_option("--scores", scores_path, "Scored JSONL")->required();
  cu->add_option("--k", sel.k, "Subset size")->required();
  cu->add_option("--mode", mode, "mean | lower_confidence");
  cu->add_option("--lambda", sel.lambda, "Lower-confidence multiplier");
  cu->add_option("--out", curate_out, "Subset JSONL (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_synth(spec_path, synth_out, tuples_per_k, out);
    if (*tr) return cmd_train(tf, out);
    if (*ev) return cmd_eval(ckpt, data, tuples_path, tie_margin, eval_out, out);
    if (*sc) return cmd_score(score_ckpt, score_data, score_out, out);
    sel.mode = parse_selection_mode(mode);
    return cmd_curate(scores_path, sel, curate_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace prefrank
