#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ppg2abp/checkpoint.hpp"
#include "ppg2abp/cyclegan.hpp"
#include "ppg2abp/dsp.hpp"
#include "ppg2abp/errors.hpp"
#include "ppg2abp/eval.hpp"
#include "ppg2abp/rng.hpp"
#include "ppg2abp/signal_io.hpp"

#ifndef PPG2ABP_VERSION
#define PPG2ABP_VERSION "0.0.0"
#endif

namespace {

namespace fs = std::filesystem;
using namespace ppg2abp;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;    // bad arguments, config, or input data
constexpr int kExitRuntime = 2;  // failures after a validated setup

// Everything that affects numerics lives here and is echoed into the run
// manifest, so a manifest plus the same binary reproduces a run.
struct Options {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  int synth_subjects = 0;
  std::size_t synth_samples = 4096;
  std::uint64_t seed = 1;

  double ppg_low_hz = 0.1;
  double ppg_high_hz = 8.0;
  double abp_high_hz = 5.0;
  int window_len = io::kWindowLength;
  int hop = 192;

  gan::TrainConfig train;
  std::string gan_form_name = "log";
  nets::GeneratorConfig gen;
  nets::DiscriminatorConfig disc;
  double lambda_cyc = 10.0;

  std::string protocol = "cross_subject";
  int folds = 5;
  double train_fraction = 0.8;
  int max_folds = 0;
};

void add_common_options(CLI::App* cmd, Options& opt) {
  cmd->set_config("--config", "", "TOML-style config file; flags override it");
  cmd->add_option("--seed", opt.seed, "global seed fixing the whole run");
  cmd->add_option("--out-dir", opt.out_dir, "output directory")->required();
}

void add_data_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--data-dir", opt.data_dir, "directory of record CSVs");
  cmd->add_option("--synth-subjects", opt.synth_subjects,
                  "generate this many synthetic subjects instead of reading files");
  cmd->add_option("--synth-samples", opt.synth_samples, "samples per synthetic subject");
}

void add_pipeline_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--preproc.ppg_low_hz", opt.ppg_low_hz, "pulse band-pass low cutoff");
  cmd->add_option("--preproc.ppg_high_hz", opt.ppg_high_hz, "pulse band-pass high cutoff");
  cmd->add_option("--preproc.abp_high_hz", opt.abp_high_hz, "pressure low-pass cutoff");
  cmd->add_option("--preproc.window_len", opt.window_len, "window length (fixed at 256)");
  cmd->add_option("--preproc.hop", opt.hop, "window hop (fixed at 192)");
  cmd->add_option("--train.epochs", opt.train.epochs, "training epochs");
  cmd->add_option("--train.batch_size", opt.train.batch_size, "windows per batch");
  cmd->add_option("--train.lr", opt.train.lr, "learning rate");
  cmd->add_option("--train.beta1", opt.train.beta1, "first-moment decay");
  cmd->add_option("--train.buffer_size", opt.train.buffer_size, "replay buffer capacity");
  cmd->add_option("--train.gan_form", opt.gan_form_name,
                  "adversarial loss form: log | log_saturating | least_squares");
  cmd->add_option("--model.gen_width", opt.gen.base_width, "generator base width");
  cmd->add_option("--model.res_blocks", opt.gen.res_blocks, "generator residual blocks");
  cmd->add_option("--model.disc_width", opt.disc.base_width, "discriminator base width");
  cmd->add_option("--model.lambda_cyc", opt.lambda_cyc, "cycle loss weight");
}

gan::PreprocConfig preproc_of(const Options& opt) {
  if (opt.window_len != io::kWindowLength || opt.hop != 192)
    throw ArgumentError("window_len and hop are fixed at 256 and 192");
  return gan::PreprocConfig{opt.ppg_low_hz, opt.ppg_high_hz, opt.abp_high_hz};
}

gan::TrainConfig train_config_of(const Options& opt) {
  gan::TrainConfig tc = opt.train;
  tc.seed = opt.seed;
  tc.gan_form = gan::gan_form_from_string(opt.gan_form_name);
  tc.validate();
  return tc;
}

std::vector<io::SignalRecord> load_dataset(const Options& opt) {
  if (opt.synth_subjects > 0 && !opt.data_dir.empty())
    throw ArgumentError("give either --data-dir or --synth-subjects, not both");
  if (opt.synth_subjects > 0) {
    std::vector<io::SignalRecord> records;
    records.reserve(static_cast<std::size_t>(opt.synth_subjects));
    for (int i = 0; i < opt.synth_subjects; ++i)
      records.push_back(io::generate_synthetic_pair(opt.seed + static_cast<std::uint64_t>(i),
                                                    opt.synth_samples));
    return records;
  }
  if (opt.data_dir.empty())
    throw ArgumentError("no data source: give --data-dir or --synth-subjects");
  if (!fs::is_directory(opt.data_dir))
    throw ArgumentError("data directory does not exist: " + opt.data_dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(opt.data_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ArgumentError("no record CSVs in " + opt.data_dir);
  std::vector<io::SignalRecord> records;
  records.reserve(paths.size());
  for (const std::string& p : paths) records.push_back(io::load_record(p));
  return records;
}

nlohmann::ordered_json options_to_json(const Options& opt, const std::string& command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = PPG2ABP_VERSION;
  j["seed"] = opt.seed;
  if (!opt.data_dir.empty()) j["data_dir"] = opt.data_dir;
  if (opt.synth_subjects > 0) {
    j["synthetic"] = {{"subjects", opt.synth_subjects}, {"samples", opt.synth_samples}};
  }
  j["out_dir"] = opt.out_dir;
  j["preproc"] = {{"ppg_low_hz", opt.ppg_low_hz},
                  {"ppg_high_hz", opt.ppg_high_hz},
                  {"abp_high_hz", opt.abp_high_hz},
                  {"window_len", opt.window_len},
                  {"hop", opt.hop}};
  j["train"] = {{"epochs", opt.train.epochs},
                {"batch_size", opt.train.batch_size},
                {"lr", opt.train.lr},
                {"beta1", opt.train.beta1},
                {"buffer_size", opt.train.buffer_size},
                {"gan_form", opt.gan_form_name}};
  j["model"] = {{"gen_width", opt.gen.base_width},
                {"res_blocks", opt.gen.res_blocks},
                {"disc_width", opt.disc.base_width},
                {"lambda_cyc", opt.lambda_cyc}};
  if (command == "evaluate") {
    j["protocol"] = opt.protocol;
    j["folds"] = opt.folds;
    j["train_fraction"] = opt.train_fraction;
    j["max_folds"] = opt.max_folds;
  }
  return j;
}

void write_manifest(const Options& opt, const std::string& command) {
  fs::create_directories(opt.out_dir);
  const fs::path path = fs::path(opt.out_dir) / "run_manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << options_to_json(opt, command).dump(2) << '\n';
  if (!out.flush()) throw Error("failed writing " + path.string());
}

int cmd_synth(const Options& opt) {
  const std::vector<io::SignalRecord> records = load_dataset(opt);
  write_manifest(opt, "synth");
  for (const io::SignalRecord& rec : records) {
    const fs::path path = fs::path(opt.out_dir) / (rec.subject_id + ".csv");
    io::save_record(rec, path.string());
    std::cout << "wrote " << path.string() << " (" << rec.length() << " samples)\n";
  }
  return kExitOk;
}

int cmd_train(const Options& opt) {
  const std::vector<io::SignalRecord> dataset = load_dataset(opt);
  const gan::PreprocConfig preproc = preproc_of(opt);
  const gan::TrainConfig tc = train_config_of(opt);
  write_manifest(opt, "train");

  gan::WindowPool pool_x, pool_y;
  for (const io::SignalRecord& rec : dataset) {
    const gan::PreparedRecord prep = gan::prepare_record(rec, preproc);
    pool_x.add(prep.ppg_windows);
    pool_y.add(prep.abp_windows);
  }
  std::cout << "training on " << dataset.size() << " records, " << pool_x.windows.size()
            << " pulse windows / " << pool_y.windows.size() << " pressure windows\n";

  gan::PatModel model =
      gan::PatModel::create(opt.gen, opt.disc, opt.lambda_cyc, tc.buffer_size, tc.seed);
  gan::Trainer trainer(model, tc);
  const std::vector<gan::StepMetrics> history = trainer.train(pool_x, pool_y);

  const fs::path ckpt_dir = fs::path(opt.out_dir) / "checkpoint";
  ckpt::save(ckpt_dir.string(), model, opt.gen, opt.disc, tc, trainer.step(), history);
  gan::save_loss_history((fs::path(opt.out_dir) / "loss.csv").string(), history);
  std::cout << "finished " << trainer.step() << " steps; checkpoint in " << ckpt_dir.string()
            << '\n';
  return kExitOk;
}

int cmd_translate(const Options& opt, const std::string& checkpoint_dir,
                  const std::string& input_path, const std::string& output_path,
                  double abp_min, double abp_max) {
  ckpt::Checkpoint checkpoint = ckpt::load(checkpoint_dir);
  const io::SignalRecord input = io::load_record(input_path);
  const gan::PreprocConfig preproc = preproc_of(opt);

  dsp::NormParams abp_norm;
  if (std::isnan(abp_min) != std::isnan(abp_max))
    throw ArgumentError("give both --abp-min and --abp-max or neither");
  if (!std::isnan(abp_min)) {
    abp_norm = dsp::NormParams{abp_min, abp_max};
    if (!abp_norm.valid()) throw ArgumentError("--abp-min must be below --abp-max");
  } else {
    abp_norm = gan::prepare_record(input, preproc).abp_norm;
  }

  const io::SignalRecord translated =
      gan::translate(checkpoint.model, input, abp_norm, preproc);
  io::save_record(translated, output_path);
  std::cout << "wrote " << output_path << " (" << translated.length() << " samples)\n";
  return kExitOk;
}

int cmd_evaluate(const Options& opt) {
  const std::vector<io::SignalRecord> dataset = load_dataset(opt);
  eval::ProtocolConfig cfg;
  if (opt.protocol == "cross_subject") {
    cfg.kind = eval::ProtocolConfig::Kind::kCrossSubject;
  } else if (opt.protocol == "per_subject") {
    cfg.kind = eval::ProtocolConfig::Kind::kPerSubject;
  } else {
    throw ArgumentError("unknown protocol '" + opt.protocol +
                        "' (expected cross_subject or per_subject)");
  }
  cfg.fold_count = opt.folds;
  cfg.train_fraction = opt.train_fraction;
  cfg.max_folds = opt.max_folds;
  cfg.preproc = preproc_of(opt);
  cfg.train = train_config_of(opt);
  cfg.gen = opt.gen;
  cfg.disc = opt.disc;
  cfg.lambda_cyc = opt.lambda_cyc;
  write_manifest(opt, "evaluate");

  const eval::EvalReport report = eval::run_protocol(dataset, cfg);
  eval::write_report_files(opt.out_dir, report);

  long ok_folds = 0;
  for (const eval::FoldReport& f : report.folds) {
    if (f.ok) {
      ++ok_folds;
      std::cout << f.name << ": matched " << f.matched << " beats, SBP MAE "
                << f.sbp.mae << " mmHg, DBP MAE " << f.dbp.mae << " mmHg\n";
    } else {
      std::cout << f.name << ": FAILED (" << f.failure << ")\n";
    }
  }
  if (report.aggregate_ok)
    std::cout << "aggregate: " << report.pooled.size() << " beats, SBP MAE "
              << report.agg_sbp.mae << " mmHg, DBP MAE " << report.agg_dbp.mae << " mmHg\n";
  std::cout << "report in " << opt.out_dir << "/report.json\n";
  if (ok_folds == 0) {
    std::cerr << "error: every fold failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulse-to-pressure waveform translation toolkit"};
  app.require_subcommand(1);

  Options opt;
  std::string checkpoint_dir, input_path, output_path;
  double abp_min = std::numeric_limits<double>::quiet_NaN();
  double abp_max = std::numeric_limits<double>::quiet_NaN();

  CLI::App* synth = app.add_subcommand("synth", "emit a synthetic paired dataset");
  add_common_options(synth, opt);
  synth->add_option("--synth-subjects", opt.synth_subjects, "number of subjects")
      ->required();
  synth->add_option("--synth-samples", opt.synth_samples, "samples per subject");

  CLI::App* train = app.add_subcommand("train", "train the translation model");
  add_common_options(train, opt);
  add_data_options(train, opt);
  add_pipeline_options(train, opt);

  CLI::App* translate = app.add_subcommand("translate", "run a checkpoint on one record");
  translate->set_config("--config", "", "TOML-style config file; flags override it");
  translate->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  translate->add_option("--input", input_path, "input record CSV")->required();
  translate->add_option("--output", output_path, "output record CSV")->required();
  translate->add_option("--abp-min", abp_min, "pressure range lower bound (mmHg)");
  translate->add_option("--abp-max", abp_max, "pressure range upper bound (mmHg)");
  translate->add_option("--preproc.ppg_low_hz", opt.ppg_low_hz, "pulse band-pass low cutoff");
  translate->add_option("--preproc.ppg_high_hz", opt.ppg_high_hz,
                        "pulse band-pass high cutoff");
  translate->add_option("--preproc.abp_high_hz", opt.abp_high_hz, "pressure low-pass cutoff");

  CLI::App* evaluate = app.add_subcommand("evaluate", "train and score a full protocol");
  add_common_options(evaluate, opt);
  add_data_options(evaluate, opt);
  add_pipeline_options(evaluate, opt);
  evaluate->add_option("--protocol", opt.protocol, "cross_subject | per_subject");
  evaluate->add_option("--folds", opt.folds, "fold count for cross_subject");
  evaluate->add_option("--train-fraction", opt.train_fraction,
                       "training prefix fraction for per_subject");
  evaluate->add_option("--max-folds", opt.max_folds, "run only the first N folds (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  // Setup mistakes (bad config values, unreadable data) exit 1; failures
  // during a validated run exit 2.
  try {
    if (synth->parsed()) return cmd_synth(opt);
    if (train->parsed()) return cmd_train(opt);
    if (translate->parsed())
      return cmd_translate(opt, checkpoint_dir, input_path, output_path, abp_min, abp_max);
    if (evaluate->parsed()) return cmd_evaluate(opt);
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
