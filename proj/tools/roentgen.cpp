// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// roentgen: command-line entry point.
//
//   roentgen init      --out model.rkb [--input-size N --channels C --head-units U --seed S --zero-head]
//   roentgen train     --data DIR --out model.rkb [--input-size N --epochs E --lr R --seed S --metrics FILE]
//   roentgen diagnose  --model model.rkb IMAGE.pgm [--threshold T]
//   roentgen evaluate  --model model.rkb --data DIR [--trials 5 --per-class 50 --seed S]
//   roentgen serve     --model model.rkb [--port P]
//   roentgen inspect   --model model.rkb
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "roentgen/roentgen.hpp"
#include "roentgen/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roentgen;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeError = 3 };

struct Failure {
  int code;
  std::string message;
};

bool g_json = false;

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

std::string created_at() {
  // Honour SOURCE_DATE_EPOCH so repeated runs can produce identical files.
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return iso8601_utc(std::chrono::system_clock::time_point(std::chrono::seconds(std::stoll(epoch))));
    } catch (const std::exception&) {
    }
  }
  return iso8601_now();
}

std::size_t count_label(const std::vector<LabeledImage>& images, Label l) {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [&](const LabeledImage& i) { return i.label == l; }));
}

struct InitOptions {
  fs::path out;
  std::size_t input_size = 224;
  std::size_t channels = 3;
  std::size_t head_units = 256;
  std::uint64_t seed = 0;
  bool zero_head = false;
};

int run_init(const InitOptions& o) {
  const Network net(build_vgg16(Shape{o.input_size, o.input_size, o.channels}, o.head_units));
  KnowledgeBase kb = init_weights(net, o.seed);
  if (o.zero_head) kb = zero_trainable(net, std::move(kb));
  kb.metadata.created_at = created_at();
  const auto bytes = save_kb_file(kb, o.out);
  emit({{"model", o.out.string()}, {"fingerprint", kb.metadata.fingerprint}, {"bytes", bytes},
        {"tensors", kb.size()}});
  return kOk;
}

struct TrainOptions {
  fs::path data;
  fs::path out;
  std::optional<fs::path> metrics;
  std::optional<fs::path> base;
  std::size_t input_size = 224;
  std::size_t channels = 3;
  std::size_t head_units = 256;
  bool lenient = false;
  TrainConfig cfg;
};

int run_train(const TrainOptions& o) {
  const auto images = load_manifest(o.data, o.lenient ? Strictness::lenient : Strictness::strict);
  for (Label l : {Label::pneumonic, Label::not_pneumonic})
    if (count_label(images, l) == 0)
      throw Failure{kDataError, std::string("no ") + to_string(l) + " images under " + o.data.string()};

  const Network net(build_vgg16(Shape{o.input_size, o.input_size, o.channels}, o.head_units));
  KnowledgeBase kb = o.base ? load_kb_file(*o.base) : init_weights(net, o.cfg.seed);
  net.check_weights(kb);

  std::vector<Example> examples;
  examples.reserve(images.size());
  for (const auto& img : images)
    examples.push_back({to_input_tensor(img.image, o.input_size, o.input_size, o.channels), target_of(img.label)});

  std::cerr << "training head on " << examples.size() << " images (" << count_label(images, Label::pneumonic)
            << " pneumonic), " << o.cfg.epochs << " epochs\n";
  auto result = train_head(net, std::move(kb), examples, o.cfg);
  result.kb.metadata.created_at = created_at();
  const auto bytes = save_kb_file(result.kb, o.out);
  if (o.metrics) {
    std::ofstream m(*o.metrics, std::ios::trunc);
    write_metrics_jsonl(m, result.metrics);
    if (!m) throw Failure{kRuntimeError, "failed writing metrics to " + o.metrics->string()};
  }
  const auto& last = result.metrics.back();
  std::cerr << "epoch " << last.epoch << ": loss " << last.loss << ", accuracy " << last.accuracy << '\n';
  emit({{"model", o.out.string()},
        {"fingerprint", result.kb.metadata.fingerprint},
        {"bytes", bytes},
        {"images", examples.size()},
        {"final", to_json(last)}});
  return kOk;
}

int run_diagnose(const fs::path& model_path, const fs::path& image, std::optional<double> threshold) {
  const Model model = Model::load(model_path);
  const GrayImage img = read_pgm(image);
  const double t = threshold.value_or(model.default_threshold());
  if (!(t > 0.0 && t < 1.0)) throw Failure{kUsage, "threshold must lie in (0, 1)"};
  emit(to_json(model.diagnose(img, t, image.stem().string())));
  return kOk;
}

struct EvaluateOptions {
  std::optional<fs::path> model;
  fs::path data;
  std::size_t trials = 5;
  std::size_t per_class = 50;
  std::uint64_t seed = 0;
  std::optional<double> threshold;
  std::optional<fs::path> predictions;
  std::optional<fs::path> report;
  bool parallel = false;
};

int run_evaluate(const EvaluateOptions& o) {
  if (!o.model && !o.predictions) throw Failure{kUsage, "evaluate needs --model or --predictions"};
  const auto images = load_manifest(o.data);
  Rng rng(o.seed);
  const auto sets = build_trials(std::span<const LabeledImage>(images), o.trials, o.per_class, rng);

  std::vector<TrialResult> trials;
  if (o.predictions) {
    // Canned labels keyed by image id, e.g. {"pneumonic/p0001": "pneumonic"}.
    const json canned = json::parse(read_file_bytes(*o.predictions));
    auto classify = [&](const LabeledImage& item) {
      if (!canned.contains(item.id)) throw Failure{kDataError, "no prediction for '" + item.id + "'"};
      Diagnosis d;
      d.label = label_from_string(canned.at(item.id).get<std::string>());
      d.score = d.label == Label::pneumonic ? 1.0 : 0.0;
      d.image_id = item.id;
      return d;
    };
    trials = run_trials<LabeledImage>(classify, sets, false);
  } else {
    const Model model = Model::load(*o.model);
    const double t = o.threshold.value_or(model.default_threshold());
    auto classify = [&](const LabeledImage& item) { return model.diagnose(item.image, t, item.id); };
    trials = run_trials<LabeledImage>(classify, sets, o.parallel);
  }
  const EvaluationReport report = summarize(std::move(trials));
  const json j = to_json(report);
  if (o.report) {
    std::ofstream out(*o.report, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Failure{kRuntimeError, "failed writing report to " + o.report->string()};
  }
  std::cerr << render_table(report);
  emit(j);
  return kOk;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

int run_serve(ServiceConfig cfg) {
  std::optional<Model> model;
  try {
    model = Model::load(cfg.model_path);
  } catch (const Error& e) {
    throw Failure{kDataError, "cannot load model '" + cfg.model_path.string() + "': " + e.what()};
  }
  DiagnosisService service(cfg, std::move(model));
  int port = 0;
  try {
    port = service.start();
  } catch (const IoError& e) {
    throw Failure{kRuntimeError, e.what()};
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << json{{"event", "listening"}, {"host", cfg.host}, {"port", port},
                    {"model_fingerprint", service.model()->fingerprint()}}
                   .dump()
            << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kOk;
}

int run_inspect(const fs::path& model_path) {
  const KnowledgeBase kb = load_kb_file(model_path);
  json tensors = json::array();
  std::size_t parameters = 0;
  for (const auto& [name, t] : kb.entries()) {
    std::vector<std::size_t> shape(t.shape().extents().begin(), t.shape().extents().end());
    tensors.push_back({{"name", name}, {"shape", shape}, {"elements", t.size()}});
    parameters += t.size();
  }
  if (g_json) {
    emit({{"file", model_path.string()},
          {"fingerprint", kb.metadata.fingerprint},
          {"metadata", to_json(kb.metadata)},
          {"tensor_count", kb.size()},
          {"parameter_count", parameters},
          {"tensors", tensors}});
    return kOk;
  }
  std::cout << "file         " << model_path.string() << '\n'
            << "format       RKB v" << kb.metadata.format_version << '\n'
            << "fingerprint  " << kb.metadata.fingerprint << '\n'
            << "created      " << kb.metadata.created_at << '\n'
            << "threshold    " << kb.metadata.threshold << '\n'
            << "tensors      " << kb.size() << " (" << parameters << " parameters)\n";
  for (const auto& t : tensors) std::cout << "  " << t["name"].get<std::string>() << "  " << t["shape"].dump() << '\n';
  return kOk;
}

int fail(int code, const std::string& message) {
  std::cerr << "error: " << message << '\n';
  if (g_json) emit({{"error", message}, {"exit_code", code}});
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest X-ray pneumonia screening engine"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json, "Machine-readable JSON on stdout, including failures");

  InitOptions init;
  auto* init_cmd = app.add_subcommand("init", "Write a freshly initialized VGG-16 knowledge base");
  init_cmd->add_option("--out", init.out, "Output RKB file")->required();
  init_cmd->add_option("--input-size", init.input_size, "Square input extent (>= 32)")->envname("ROENTGEN_INPUT_SIZE");
  init_cmd->add_option("--channels", init.channels, "Input channels (1 or 3)")->envname("ROENTGEN_CHANNELS");
  init_cmd->add_option("--head-units", init.head_units, "Hidden units of the classifier head");
  init_cmd->add_option("--seed", init.seed, "Initialization seed")->envname("ROENTGEN_SEED");
  init_cmd->add_flag("--zero-head", init.zero_head, "Zero the trainable head (every image scores 0.5)");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier head on a labelled dataset");
  train_cmd->add_option("--data", train.data, "Dataset root with pneumonic/ and not_pneumonic/")
      ->required()
      ->envname("ROENTGEN_DATA");
  train_cmd->add_option("--out", train.out, "Output RKB file")->required();
  train_cmd->add_option("--input-size", train.input_size, "Square input extent (>= 32)")->envname("ROENTGEN_INPUT_SIZE");
  train_cmd->add_option("--channels", train.channels, "Input channels (1 or 3)")->envname("ROENTGEN_CHANNELS");
  train_cmd->add_option("--head-units", train.head_units, "Hidden units of the classifier head");
  train_cmd->add_option("--epochs", train.cfg.epochs, "Training epochs")->envname("ROENTGEN_EPOCHS");
  train_cmd->add_option("--lr", train.cfg.learning_rate, "SGD learning rate")->envname("ROENTGEN_LR");
  train_cmd->add_option("--batch-size", train.cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--seed", train.cfg.seed, "Seed for init, shuffling and augmentation")->envname("ROENTGEN_SEED");
  train_cmd->add_option("--threshold", train.cfg.threshold, "Decision threshold recorded in the model");
  train_cmd->add_flag("--hflip", train.cfg.augment_hflip, "Random horizontal flip augmentation");
  train_cmd->add_option("--metrics", train.metrics, "Per-epoch metrics output (JSON lines)")->envname("ROENTGEN_METRICS");
  train_cmd->add_option("--base", train.base, "Start from this knowledge base (e.g. pretrained features)");
  train_cmd->add_flag("--lenient", train.lenient, "Skip unreadable images instead of failing");

  fs::path diag_model, diag_image;
  std::optional<double> diag_threshold;
  auto* diag_cmd = app.add_subcommand("diagnose", "Diagnose one PGM image");
  diag_cmd->add_option("--model", diag_model, "RKB file")->required()->envname("ROENTGEN_MODEL");
  diag_cmd->add_option("image", diag_image, "Binary PGM image")->required();
  diag_cmd->add_option("--threshold", diag_threshold, "Decision threshold (default: the model's)")
      ->envname("ROENTGEN_THRESHOLD");

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the multi-trial confirmatory test");
  eval_cmd->add_option("--model", eval.model, "RKB file")->envname("ROENTGEN_MODEL");
  eval_cmd->add_option("--data", eval.data, "Held-out dataset root")->required()->envname("ROENTGEN_DATA");
  eval_cmd->add_option("--trials", eval.trials, "Number of trials");
  eval_cmd->add_option("--per-class", eval.per_class, "Images per class per trial");
  eval_cmd->add_option("--seed", eval.seed, "Sampling seed")->envname("ROENTGEN_SEED");
  eval_cmd->add_option("--threshold", eval.threshold, "Decision threshold")->envname("ROENTGEN_THRESHOLD");
  eval_cmd->add_option("--predictions", eval.predictions, "JSON object of canned labels by image id");
  eval_cmd->add_option("--report", eval.report, "Also write the JSON report here");
  eval_cmd->add_flag("--parallel", eval.parallel, "Run trials concurrently");

  ServiceConfig serve;
  std::size_t upload_limit = serve.upload_limit;
  std::optional<fs::path> serve_metrics, serve_static;
  std::optional<double> serve_threshold;
  bool quiet = false;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP diagnosis service");
  serve_cmd->add_option("--model", serve.model_path, "RKB file")->required()->envname("ROENTGEN_MODEL");
  serve_cmd->add_option("--host", serve.host, "Bind address")->envname("ROENTGEN_HOST");
  serve_cmd->add_option("--port", serve.port, "Port (0 = any free port)")->envname("ROENTGEN_PORT");
  serve_cmd->add_option("--storage", serve.storage_dir, "Upload and report directory")->envname("ROENTGEN_STORAGE");
  serve_cmd->add_option("--upload-limit", upload_limit, "Maximum upload size in bytes")
      ->envname("ROENTGEN_UPLOAD_LIMIT");
  serve_cmd->add_option("--metrics", serve_metrics, "Training metrics file to expose")->envname("ROENTGEN_METRICS");
  serve_cmd->add_option("--static-dir", serve_static, "Directory of static UI files")->envname("ROENTGEN_STATIC_DIR");
  serve_cmd->add_option("--threshold", serve_threshold, "Decision threshold")->envname("ROENTGEN_THRESHOLD");
  serve_cmd->add_flag("--quiet", quiet, "Disable the request log");

  fs::path inspect_model;
  auto* inspect_cmd = app.add_subcommand("inspect", "Describe a knowledge base file");
  inspect_cmd->add_option("--model", inspect_model, "RKB file")->required()->envname("ROENTGEN_MODEL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (g_json) return fail(kUsage, e.what());
    app.exit(e);
    return kUsage;
  }

  try {
    if (*init_cmd) return run_init(init);
    if (*train_cmd) return run_train(train);
    if (*diag_cmd) return run_diagnose(diag_model, diag_image, diag_threshold);
    if (*eval_cmd) return run_evaluate(eval);
    if (*serve_cmd) {
      serve.upload_limit = upload_limit;
      serve.metrics_path = serve_metrics;
      serve.static_dir = serve_static;
      serve.threshold = serve_threshold;
      serve.log_requests = !quiet;
      return run_serve(serve);
    }
    if (*inspect_cmd) return run_inspect(inspect_model);
  } catch (const Failure& f) {
    return fail(f.code, f.message);
  } catch (const TrialError& e) {
    return fail(kRuntimeError, e.what());
  } catch (const TrainingError& e) {
    return fail(kRuntimeError, e.what());
  } catch (const Error& e) {
    return fail(kDataError, e.what());
  } catch (const json::exception& e) {
    return fail(kDataError, e.what());
  } catch (const std::exception& e) {
    return fail(kRuntimeError, e.what());
  }
  return kUsage;
}
