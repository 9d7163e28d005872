#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "partmatch/errors.hpp"
#include "partmatch/trainer.hpp"

using namespace partmatch;

namespace {

SyntheticSpec toy_spec(std::size_t identities = 6, std::size_t held_out = 1) {
  SyntheticSpec s;
  s.num_identities = identities;
  s.val_identities = held_out;
  s.test_identities = held_out;
  s.images_per_identity = 2;
  s.texts_per_image = 2;
  s.latent_dim = 4;
  s.levels = 3;
  s.text_noise_tokens = 2;
  s.vocab_size = 32;
  s.input_height = 16;
  s.input_width = 8;
  s.seed = 11;
  return s;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.model = ModelConfig::tiny();
  c.epochs = 4;
  c.warmup_epochs = 1;
  c.decay_epoch = 3;
  c.batch_size = 4;
  c.steps_per_epoch = 3;
  c.eval_interval = 2;
  c.seed = 5;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("partmatch_test_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("lr_schedule") {
  TEST_CASE("reference schedule values") {
    const TrainConfig c = TrainConfig::reference();
    CHECK(lr_schedule(30, c) == 3e-3);
    CHECK(lr_schedule(60, c) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK(lr_schedule(0, c) == doctest::Approx(3e-4).epsilon(1e-12));
  }

  TEST_CASE("boundaries") {
    const TrainConfig c = TrainConfig::reference();
    // ramp 0.1 base -> base over epochs [0, 10)
    CHECK(lr_schedule(5, c) == doctest::Approx(3e-3 * (0.1 + 0.9 * 0.5)).epsilon(1e-12));
    CHECK(lr_schedule(9, c) == doctest::Approx(3e-3 * (0.1 + 0.9 * 0.9)).epsilon(1e-12));
    CHECK(lr_schedule(10, c) == 3e-3);
    CHECK(lr_schedule(49, c) == 3e-3);
    CHECK(lr_schedule(50, c) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK(lr_schedule(79, c) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK_THROWS_AS(lr_schedule(80, c), ConfigError);
  }

  TEST_CASE("ramp is increasing") {
    const TrainConfig c = TrainConfig::reference();
    for (std::size_t e = 1; e < 10; ++e) CHECK(lr_schedule(e, c) > lr_schedule(e - 1, c));
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradient from zero state is a fixed point") {
    std::vector<double> p{0.5, -1.0};
    const std::vector<double> g{0.0, 0.0};
    AdamMoments m;
    adam_step(p, g, m, 0.1, AdamOptions{0.9, 0.999, 1e-8, 0.0});
    CHECK(p == std::vector<double>{0.5, -1.0});
    CHECK(m.step == 1);
  }

  TEST_CASE("first step with unit gradient moves by the learning rate") {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    AdamMoments m;
    adam_step(p, g, m, 0.1, AdamOptions{0.9, 0.999, 1e-8, 0.0});
    // m_hat = 1, v_hat = 1
    CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }

  TEST_CASE("two steps against a scalar recomputation, with weight decay") {
    std::vector<double> p{2.0};
    AdamMoments m;
    const AdamOptions o{0.9, 0.999, 1e-8, 0.01};
    double x = 2.0, m1 = 0.0, v1 = 0.0;
    for (int t = 1; t <= 2; ++t) {
      const double g = 0.5 * t;
      const std::vector<double> gv{g};
      adam_step(p, gv, m, 0.05, o);
      m1 = 0.9 * m1 + 0.1 * g;
      v1 = 0.999 * v1 + 0.001 * g * g;
      const double mh = m1 / (1 - std::pow(0.9, t)), vh = v1 / (1 - std::pow(0.999, t));
      x -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * x);
      CHECK(p[0] == doctest::Approx(x).epsilon(1e-14));
    }
  }

  TEST_CASE("size mismatch is a shape error") {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{1.0};
    AdamMoments m;
    CHECK_THROWS_AS(adam_step(p, g, m, 0.1, AdamOptions{}), ShapeError);
  }

  TEST_CASE("optimizer holds only trainable parameters") {
    Model model(ModelConfig::tiny(), 1);
    Adam adam(model.params(), AdamOptions{});
    for (const auto& [name, moments] : adam.state()) CHECK(name != "text.embedding");
    CHECK(adam.state().size() == model.params().trainable().size());
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults are the desk-scale setup") {
    const TrainConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.epochs == 30);
    CHECK(c.batch_size == 16);
    CHECK(c.steps_per_epoch == 128);
    CHECK(c.model.visual.regions == 3);
    CHECK(c.model.textual.bottlenecks == 2);
    CHECK(c.model.visual.low_channels == 32);
    CHECK(c.model.visual.high_channels == 64);
    CHECK(c.model.textual.length == 16);
    CHECK(c.model.textual.embed_dim == 24);
    CHECK(c.base_lr == 3e-3);
    CHECK(c.weight_decay == 4e-5);
  }

  TEST_CASE("reference recipe") {
    const TrainConfig c = TrainConfig::reference();
    CHECK_NOTHROW(c.validate());
    CHECK(c.epochs == 80);
    CHECK(c.warmup_epochs == 10);
    CHECK(c.decay_epoch == 50);
    CHECK(c.batch_size == 64);
    CHECK(c.decay_factor == 0.1);
  }

  TEST_CASE("JSON round-trip, partial documents and errors") {
    TrainConfig c = toy_config();
    c.loss = LossWeights::variant('d');
    c.model.pooling = Pooling::MaxPlusAvg;
    const TrainConfig back = parse_train_config(to_json_text(c));
    CHECK(to_json_text(back) == to_json_text(c));
    const TrainConfig partial = parse_train_config(R"({"seed": 3, "model": {"regions": 2}, "loss": {"lambda1": 0}})");
    CHECK(partial.seed == 3);
    CHECK(partial.model.visual.regions == 2);
    CHECK(partial.model.textual.regions == 2);
    CHECK(partial.loss.low == 0.0);
    CHECK(partial.epochs == 30);
    CHECK_THROWS_AS(parse_train_config(R"({"train": {"learning_rate": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"optimizer": {}})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"model": {"regions": 4}})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"train": {"epochs": 5, "warmup_epochs": 5}})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"model": {"pooling": "min"}})"), ConfigError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero epochs return the initial state and no history") {
    const Dataset ds = generate(toy_spec());
    TrainConfig c = toy_config();
    c.epochs = 0;
    c.warmup_epochs = 0;
    const TrainResult r = train(c, ds);
    CHECK(r.history.empty());
    CHECK(r.checkpoint.step == 0);
    Model fresh(c.model, c.seed);
    for (const auto& p : fresh.params().all()) {
      CHECK(r.checkpoint.find("param/" + p.name)->values == p.var.value().data());
    }
  }

  TEST_CASE("same seed gives identical histories and metrics files") {
    const Dataset ds = generate(toy_spec());
    const TrainResult a = train(toy_config(), ds);
    const TrainResult b = train(toy_config(), ds);
    CHECK(a.history == b.history);
    CHECK(a.checkpoint == b.checkpoint);
    write_metrics_csv(temp_path("m1.csv"), a.history);
    write_metrics_csv(temp_path("m2.csv"), b.history);
    CHECK(read_bytes(temp_path("m1.csv")) == read_bytes(temp_path("m2.csv")));
    TrainConfig other = toy_config();
    other.seed = 6;
    CHECK_FALSE(train(other, ds).history == a.history);
  }

  TEST_CASE("metrics file layout") {
    const Dataset ds = generate(toy_spec());
    const TrainResult r = train(toy_config(), ds);
    REQUIRE(r.history.size() == 4);
    CHECK_FALSE(r.history[0].eval.has_value());
    CHECK(r.history[1].eval.has_value());
    CHECK(r.history[3].eval.has_value());
    const auto path = temp_path("metrics.csv");
    write_metrics_csv(path, r.history);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "epoch,loss,lr,top1,top5,top10");
    std::getline(is, line);
    CHECK(line.substr(0, 2) == "0,");
    CHECK(line.substr(line.size() - 3) == ",,,");
    std::getline(is, line);
    CHECK(line.back() != ',');
  }

  TEST_CASE("checkpoint file round-trip is bit-exact") {
    const Dataset ds = generate(toy_spec());
    Trainer t(toy_config(), ds);
    t.run_epoch();
    const Checkpoint ck = t.checkpoint();
    const auto path = temp_path("ck.bin");
    ck.save(path);
    const Checkpoint back = Checkpoint::load(path);
    CHECK(back == ck);
    back.save(temp_path("ck2.bin"));
    CHECK(read_bytes(path) == read_bytes(temp_path("ck2.bin")));
    CHECK(ck.find("buffer/visual.stage0.bn.running_mean") != nullptr);
    CHECK(ck.find("adam_m/visual.high.expand.weight") != nullptr);
    CHECK(ck.find("adam_m/text.embedding") == nullptr);
  }

  TEST_CASE("resuming from a saved checkpoint reproduces the next losses bit for bit") {
    const Dataset ds = generate(toy_spec());
    Trainer straight(toy_config(), ds);
    for (int i = 0; i < 4; ++i) straight.step();
    const double next1 = straight.step();
    const double next2 = straight.step();

    Trainer first(toy_config(), ds);
    for (int i = 0; i < 4; ++i) first.step();
    const auto path = temp_path("resume.bin");
    first.checkpoint().save(path);
    Trainer resumed(Checkpoint::load(path), ds);
    CHECK(resumed.steps_done() == 4);
    CHECK(resumed.step() == next1);
    CHECK(resumed.step() == next2);
    CHECK(resumed.checkpoint() == straight.checkpoint());
  }

  TEST_CASE("corrupt or mismatched checkpoints are rejected") {
    std::ofstream(temp_path("junk.bin")) << "not a checkpoint";
    CHECK_THROWS_AS(Checkpoint::load(temp_path("junk.bin")), IoError);
    CHECK_THROWS_AS(Checkpoint::load(temp_path("missing.bin")), IoError);
    const Dataset ds = generate(toy_spec());
    Trainer t(toy_config(), ds);
    Checkpoint ck = t.checkpoint();
    ck.arrays.erase(ck.arrays.begin());
    Model m(toy_config().model, 1);
    CHECK_THROWS_AS(load_model_state(m, ck), ConfigError);
  }

  TEST_CASE("frozen embedding is bit-identical after 100 optimizer steps") {
    const Dataset ds = generate(toy_spec());
    TrainConfig c = toy_config();
    c.steps_per_epoch = 25;
    Trainer t(c, ds);
    const Tensor before = t.model().params().get("text.embedding").var.value();
    for (int i = 0; i < 100; ++i) t.step();
    CHECK(t.model().params().get("text.embedding").var.value() == before);
    CHECK_FALSE(t.model().params().get("text.project.weight").var.value() ==
                Model(c.model, c.seed).params().get("text.project.weight").var.value());
  }

  TEST_CASE("dataset that does not fit the model is rejected") {
    SyntheticSpec s = toy_spec();
    s.input_height = 32;
    const Dataset ds = generate(s);
    CHECK_THROWS_AS(Trainer(toy_config(), ds), ConfigError);
  }

  TEST_CASE("all six loss-stage variants train") {
    const Dataset ds = generate(toy_spec());
    for (char v : std::string("abcdef")) {
      TrainConfig c = apply_ablation_value(toy_config(), AblationAxis::LossStages, std::string(1, v));
      c.epochs = 2;
      c.steps_per_epoch = 1;
      const TrainResult r = train(c, ds);
      CHECK(r.history.size() == 2);
      CHECK(std::isfinite(r.history.back().loss));
    }
  }

  TEST_CASE("non-finite loss names the offending term") {
    const Dataset ds = generate(toy_spec());
    TrainConfig c = toy_config();
    Trainer t(c, ds);
    for (auto& p : t.model().params().all()) {
      if (p.name == "visual.high.bn3.beta") std::fill(p.var.mutable_value().data().begin(), p.var.mutable_value().data().end(), std::nan(""));
    }
    try {
      t.step();
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("loss term") != std::string::npos);
      CHECK(msg.find("local[0]") != std::string::npos);
    }
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("evaluation is pure") {
    const Dataset ds = generate(toy_spec());
    const TrainResult r = train(toy_config(), ds);
    CHECK(evaluate(r.checkpoint, ds, Split::Validation) == evaluate(r.checkpoint, ds, Split::Validation));
    Model m(r.checkpoint.config.model, r.checkpoint.config.seed);
    load_model_state(m, r.checkpoint);
    CHECK(evaluate(m, ds, Split::Test) == evaluate(r.checkpoint, ds, Split::Test));
  }

  TEST_CASE("embeddings cover every query and gallery item of the split") {
    const Dataset ds = generate(toy_spec());
    Model m(ModelConfig::tiny(), 3);
    const SplitEmbeddings e = embed_split(m, ds, Split::Train);
    CHECK(e.images.shape() == Shape{8, 16});
    CHECK(e.texts.shape() == Shape{16, 16});
    CHECK(e.image_ids.size() == 8);
    CHECK(e.text_ids.size() == 16);
  }

  TEST_CASE("four-identity overfit run memorizes its training split") {
    SyntheticSpec s = toy_spec(6, 1);
    const Dataset ds = generate(s);
    TrainConfig c;
    c.model = ModelConfig::tiny();
    c.model.visual.low_channels = c.model.textual.low_channels = 16;
    c.model.visual.high_channels = c.model.textual.high_channels = 32;
    c.epochs = 21;
    c.warmup_epochs = 2;
    c.decay_epoch = 15;
    c.batch_size = 8;
    c.steps_per_epoch = 8;
    c.eval_interval = 100;
    c.seed = 7;
    const TrainResult r = train(c, ds);
    CHECK(r.history[20].loss < r.history[1].loss);
    const TopK acc = evaluate(r.checkpoint, ds, Split::Train);
    CHECK(acc.top1 == 1.0);
  }
}

TEST_SUITE("gradcheck") {
  TEST_CASE("default tiny configuration passes without the frozen table") {
    const auto start = std::chrono::steady_clock::now();
    const GradCheckReport rep = gradcheck(GradCheckConfig{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK_MESSAGE(rep.passed, rep.max_rel_error);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(secs < 60.0);
    for (const auto& e : rep.entries) CHECK(e.name != "text.embedding");
    Model m(ModelConfig::tiny(), 3);
    CHECK(rep.elements_checked == m.params().trainable_count());
    CHECK(rep.entries.size() == m.params().trainable().size());
  }

  TEST_CASE("corrupted analytic gradient fails and names the parameter") {
    const auto corrupt = [](Model& model) {
      const Var w = model.params().get("text.project.weight").var;
      double total = 0.0;
      for (double v : w.value().data()) total += v;
      // Value is sum(w) but the backward pass reports twice the true gradient.
      return make_node(Tensor::scalar(total), {w}, [w](Node& self) {
        auto& g = w.node().grad_buffer();
        for (auto& v : g) v += 2.0 * self.grad[0];
      });
    };
    const GradCheckReport rep = gradcheck(GradCheckConfig{}, corrupt);
    CHECK_FALSE(rep.passed);
    REQUIRE_FALSE(rep.entries.empty());
    CHECK(rep.entries.front().name == "text.project.weight");
  }

  TEST_CASE("oversized configuration is refused") {
    GradCheckConfig gc;
    gc.max_parameters = 1000;
    CHECK_THROWS_AS(gradcheck(gc), ConfigError);
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("axis names and values") {
    CHECK(parse_ablation_axis("loss-stages") == AblationAxis::LossStages);
    CHECK_THROWS_AS(parse_ablation_axis("depth"), ConfigError);
    const TrainConfig base;
    CHECK(apply_ablation_value(base, AblationAxis::Regions, "6").model.visual.regions == 6);
    CHECK(apply_ablation_value(base, AblationAxis::Regions, "6").model.textual.regions == 6);
    CHECK(apply_ablation_value(base, AblationAxis::Bottlenecks, "3").model.textual.bottlenecks == 3);
    CHECK(apply_ablation_value(base, AblationAxis::Downsample, "1").model.textual.downsample_steps == 1);
    CHECK(apply_ablation_value(base, AblationAxis::Fusion, "avg").model.pooling == Pooling::Avg);
    CHECK(apply_ablation_value(base, AblationAxis::Fusion, "max+avg").model.pooling == Pooling::MaxPlusAvg);
    CHECK(apply_ablation_value(base, AblationAxis::LossStages, "b").loss.low == 0.0);
    CHECK_THROWS_AS(apply_ablation_value(base, AblationAxis::Regions, "4"), ConfigError);
    CHECK_THROWS_AS(apply_ablation_value(base, AblationAxis::Regions, "x"), ConfigError);
    CHECK_THROWS_AS(apply_ablation_value(base, AblationAxis::Downsample, "3"), ConfigError);
    CHECK_THROWS_AS(apply_ablation_value(base, AblationAxis::LossStages, "z"), ConfigError);
    CHECK_THROWS_AS(apply_ablation_value(base, AblationAxis::Fusion, "sum"), ConfigError);
  }

  TEST_CASE("regions 1, 2, 3, 6 give a four-row table") {
    const Dataset ds = generate(SyntheticSpec{});
    TrainConfig base;
    base.epochs = 1;
    base.warmup_epochs = 0;
    base.steps_per_epoch = 1;
    const std::vector<std::string> values{"1", "2", "3", "6"};
    const std::vector<std::uint64_t> seeds{1};
    const AblationTable t = ablate(AblationAxis::Regions, values, base, ds, seeds);
    REQUIRE(t.rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(t.rows[i].value == values[i]);
      CHECK(t.rows[i].per_seed.size() == 1);
      CHECK(t.rows[i].mean == t.rows[i].per_seed[0]);
    }
    const auto path = temp_path("ablation.csv");
    write_ablation_csv(path, t);
    std::ifstream is(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 5);
  }

  TEST_CASE("an invalid value fails before any training") {
    const Dataset ds = generate(toy_spec());
    const std::vector<std::string> values{"1", "3"};
    const std::vector<std::uint64_t> seeds{1};
    int trained = 0;
    CHECK_THROWS_AS(ablate(AblationAxis::Regions, values, toy_config(), ds, seeds, Split::Test,
                           [&](const std::string&, std::uint64_t, const TopK&) { ++trained; }),
                    ConfigError);
    CHECK(trained == 0);
  }
}
