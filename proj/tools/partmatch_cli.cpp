#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "partmatch/errors.hpp"
#include "partmatch/trainer.hpp"

using namespace partmatch;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

struct DataSource {
  std::string dir;
  std::string spec;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", dir, "Dataset directory written by `synth`");
    cmd->add_option("--synth-spec", spec, "Generate the dataset in memory from this spec file");
  }

  Dataset load() const {
    if (!dir.empty() && !spec.empty()) throw ConfigError("give either --data or --synth-spec, not both");
    if (!dir.empty()) return load_dataset(dir);
    return generate(spec.empty() ? SyntheticSpec{} : parse_synthetic_spec(read_file(spec)));
  }
};

TrainConfig load_config(const std::string& path) {
  return path.empty() ? TrainConfig{} : parse_train_config(read_file(path));
}

json topk_json(const TopK& r) { return {{"top1", r.top1}, {"top5", r.top5}, {"top10", r.top10}}; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-based cross-modal retrieval: synthetic data, training, evaluation and ablations"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  std::string synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", synth_spec, "Spec file (JSON); defaults when omitted");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the spec seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics and a checkpoint");
  DataSource train_data;
  train_data.attach(train_cmd);
  std::string train_config, train_out, train_resume;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_epochs;
  train_cmd->add_option("--config", train_config, "Training config (JSON); defaults when omitted");
  train_cmd->add_option("--out", train_out, "Output directory for metrics.csv and checkpoint.bin")->required();
  train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint");
  train_cmd->add_option("--seed", train_seed, "Override the config seed");
  train_cmd->add_option("--epochs", train_epochs, "Override the epoch count");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Top-k retrieval report for a checkpoint");
  DataSource eval_data;
  eval_data.attach(eval_cmd);
  std::string eval_ckpt, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "train, val or test");
  eval_cmd->add_option("--out", eval_out, "Write the JSON report here as well as to stdout");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model at tiny dimensions");
  double grad_step = 1e-5, grad_tol = 1e-4;
  std::uint64_t grad_seed = 3;
  std::size_t grad_show = 5;
  grad_cmd->add_option("--step", grad_step, "Central-difference step h");
  grad_cmd->add_option("--tolerance", grad_tol, "Maximum relative error");
  grad_cmd->add_option("--seed", grad_seed, "Seed for weights and batch");
  grad_cmd->add_option("--show", grad_show, "Number of worst parameters to list");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train one model per axis value and seed, compare top-k");
  DataSource ablate_data;
  ablate_data.attach(ablate_cmd);
  std::string ablate_axis, ablate_values, ablate_config, ablate_seeds = "1,2,3,4,5", ablate_split = "test",
                                                          ablate_out;
  ablate_cmd->add_option("--axis", ablate_axis, "regions, bottlenecks, downsample, fusion or loss-stages")->required();
  ablate_cmd->add_option("--values", ablate_values, "Comma-separated axis values")->required();
  ablate_cmd->add_option("--config", ablate_config, "Base training config (JSON)");
  ablate_cmd->add_option("--seeds", ablate_seeds, "Comma-separated seeds");
  ablate_cmd->add_option("--split", ablate_split, "Evaluation split");
  ablate_cmd->add_option("--out", ablate_out, "CSV table path");

  // export-embeddings
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write global representations of a split");
  DataSource export_data;
  export_data.attach(export_cmd);
  std::string export_ckpt, export_split = "test", export_out;
  export_cmd->add_option("--checkpoint", export_ckpt, "Checkpoint file")->required();
  export_cmd->add_option("--split", export_split, "train, val or test");
  export_cmd->add_option("--out", export_out, "Output TSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (synth->parsed()) {
      SyntheticSpec spec = synth_spec.empty() ? SyntheticSpec{} : parse_synthetic_spec(read_file(synth_spec));
      if (synth_seed) spec.seed = *synth_seed;
      const Dataset ds = generate(spec);
      save_dataset(ds, synth_out);
      std::printf("wrote %zu images, %zu texts to %s (separability %.4f)\n", ds.images.size(), ds.texts.size(),
                  synth_out.c_str(), ds.separability);
    } else if (train_cmd->parsed()) {
      const Dataset ds = train_data.load();
      std::filesystem::create_directories(train_out);
      const auto start = std::chrono::steady_clock::now();
      std::unique_ptr<Trainer> trainer;
      if (!train_resume.empty()) {
        if (!train_config.empty() || train_seed || train_epochs) {
          throw ConfigError("--resume takes its configuration from the checkpoint");
        }
        trainer = std::make_unique<Trainer>(Checkpoint::load(train_resume), ds);
      } else {
        TrainConfig config = load_config(train_config);
        if (train_seed) config.seed = *train_seed;
        if (train_epochs) config.epochs = *train_epochs;
        trainer = std::make_unique<Trainer>(config, ds);
      }
      trainer->run([](const EpochRecord& r) {
        std::printf("epoch %3zu  loss %.6f  lr %.2e", r.epoch, r.loss, r.lr);
        if (r.eval) std::printf("  val top1 %.4f top5 %.4f top10 %.4f", r.eval->top1, r.eval->top5, r.eval->top10);
        std::printf("\n");
        std::fflush(stdout);
      });
      const auto out = std::filesystem::path(train_out);
      write_metrics_csv(out / "metrics.csv", trainer->history());
      trainer->checkpoint().save(out / "checkpoint.bin");
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("wrote %s and %s (%.1f s)\n", (out / "metrics.csv").c_str(), (out / "checkpoint.bin").c_str(), secs);
    } else if (eval_cmd->parsed()) {
      const Dataset ds = eval_data.load();
      const Checkpoint ck = Checkpoint::load(eval_ckpt);
      const Split split = parse_split(eval_split);
      const TopK r = evaluate(ck, ds, split);
      json report = topk_json(r);
      report["split"] = to_string(split);
      report["epoch"] = ck.epoch;
      report["queries"] = ds.split(split).texts.size();
      report["gallery"] = ds.split(split).images.size();
      const std::string text = report.dump(2) + "\n";
      std::cout << text;
      if (!eval_out.empty()) write_file(eval_out, text);
    } else if (grad_cmd->parsed()) {
      GradCheckConfig gc;
      gc.step = grad_step;
      gc.tolerance = grad_tol;
      gc.seed = grad_seed;
      const auto start = std::chrono::steady_clock::now();
      const GradCheckReport rep = gradcheck(gc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("%s  max relative error %.3e (tolerance %.1e), %zu elements, %.1f s\n",
                  rep.passed ? "PASS" : "FAIL", rep.max_rel_error, rep.tolerance, rep.elements_checked, secs);
      for (std::size_t i = 0; i < std::min(grad_show, rep.entries.size()); ++i) {
        const auto& e = rep.entries[i];
        std::printf("  %-40s %.3e  [%zu] analytic %.9g numeric %.9g\n", e.name.c_str(), e.max_rel_error,
                    e.worst_index, e.analytic, e.numeric);
      }
      if (!rep.passed) return kNumeric;
    } else if (ablate_cmd->parsed()) {
      const AblationAxis axis = parse_ablation_axis(ablate_axis);
      const auto values = split_list(ablate_values);
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(ablate_seeds)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw ConfigError("bad seed '" + s + "'");
        }
      }
      const TrainConfig base = load_config(ablate_config);
      for (const auto& v : values) apply_ablation_value(base, axis, v);
      const Dataset ds = ablate_data.load();
      const AblationTable table =
          ablate(axis, values, base, ds, seeds, parse_split(ablate_split),
                 [](const std::string& v, std::uint64_t seed, const TopK& r) {
                   std::printf("%s seed %llu: top1 %.4f top5 %.4f top10 %.4f\n", v.c_str(),
                               static_cast<unsigned long long>(seed), r.top1, r.top5, r.top10);
                   std::fflush(stdout);
                 });
      std::printf("\n%-12s %8s %8s %8s\n", to_string(axis), "top1", "top5", "top10");
      for (const auto& row : table.rows) {
        std::printf("%-12s %8.4f %8.4f %8.4f\n", row.value.c_str(), row.mean.top1, row.mean.top5, row.mean.top10);
      }
      if (!ablate_out.empty()) write_ablation_csv(ablate_out, table);
    } else if (export_cmd->parsed()) {
      const Dataset ds = export_data.load();
      const Checkpoint ck = Checkpoint::load(export_ckpt);
      Model model(ck.config.model, ck.config.seed);
      load_model_state(model, ck);
      const SplitEmbeddings e = embed_split(model, ds, parse_split(export_split));
      std::vector<EmbeddingRecord> records;
      const std::size_t c = e.images.dim(1);
      auto append = [&](const char* modality, const Tensor& t, const std::vector<int>& ids) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto row = t.values().subspan(i * c, c);
          records.push_back({modality, ids[i], std::vector<double>(row.begin(), row.end())});
        }
      };
      append("image", e.images, e.image_ids);
      append("text", e.texts, e.text_ids);
      export_embeddings(export_out, records);
      std::printf("wrote %zu records to %s\n", records.size(), export_out.c_str());
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIo;
  }
  return kOk;
}
