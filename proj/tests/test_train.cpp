#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "data/synth.h"
#include "model/positional.h"
#include "test_util.h"
#include "train/trainer.h"

using namespace pagetext;
using namespace pagetext::testutil;

namespace {

RunConfig tiny_run_cfg() {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.model.decoder_layers = 1;
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.d_ff = 32;
  cfg.model.dropout = 0.0;
  cfg.model.attention_window = 8;
  cfg.model.max_decode_len = 32;
  cfg.model.encoder_widths = {4, 8};
  cfg.model.encoder_blocks = {1, 1};
  cfg.train.batch_size = 2;
  cfg.train.grad_accumulation = 1;
  cfg.train.canvas_height = 16;
  cfg.train.canvas_width = 64;
  cfg.train.learning_rate = 1e-3;
  cfg.data.page_max_height = 16;
  cfg.data.page_max_width = 64;
  return cfg;
}

Sample tiny_sample(const std::string& text, int h = 12, int w = 40) {
  GenConfig g;
  g.margin = 2;
  g.wrap_min = g.wrap_max = std::max<int>(4, static_cast<int>(text.size()));
  g.page_max_height = h >= 16 ? h : 16;
  g.page_max_width = w >= 64 ? w : 64;
  g.background_min = g.background_max = 0.95;
  g.ink_min = g.ink_max = 0.05;
  g.font_scales = {1};
  Rng rng(3);
  return render_page(text, Layout::kOneCol, Font::face("regular"), 1, g, rng);
}

}  // namespace

TEST_CASE("teacher forcing shift") {
  std::vector<int32_t> just_eos = {Vocabulary::kEos};
  auto [in0, tgt0] = teacher_forcing_shift(just_eos);
  CHECK(in0 == std::vector<int32_t>{Vocabulary::kBos});
  CHECK(tgt0 == just_eos);

  std::vector<int32_t> seq = {10, 11, Vocabulary::kEos};
  auto [in1, tgt1] = teacher_forcing_shift(seq);
  CHECK(in1 == std::vector<int32_t>{Vocabulary::kBos, 10, 11});
  CHECK(tgt1 == seq);
  CHECK(in1.size() == tgt1.size());

  CHECK_THROWS_AS(teacher_forcing_shift({10, 11}), contract_error);
}

TEST_CASE("sequence loss closed forms") {
  int V = 6;
  // uniform logits: loss = ln V
  auto logits = Tensor<double>::zeros({3, V});
  std::vector<int32_t> target = {0, 3, 5};
  CHECK(sequence_loss<double>(nullptr, logits, target).item() ==
        doctest::Approx(std::log(V)).epsilon(1e-12));

  // near-one-hot correct rows: loss ~ 0
  auto hot = Tensor<double>::zeros({2, V});
  std::vector<int32_t> t2 = {1, 4};
  hot.data()[0 * V + 1] = 50.0;
  hot.data()[1 * V + 4] = 50.0;
  CHECK(sequence_loss<double>(nullptr, hot, t2).item() < 1e-9);

  // tau = 2 with target probabilities 0.5 and 0.25
  auto two = Tensor<double>::zeros({2, 4});
  // row 0: p(target 0) = 0.5, rest uniform
  two.data()[0] = std::log(0.5);
  for (int j = 1; j < 4; ++j) two.data()[j] = std::log(0.5 / 3.0);
  // row 1: p(target 1) = 0.25
  two.data()[4 + 1] = std::log(0.25);
  for (int j : {0, 2, 3}) two.data()[4 + j] = std::log(0.75 / 3.0);
  std::vector<int32_t> t3 = {0, 1};
  CHECK(sequence_loss<double>(nullptr, two, t3).item() ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("batch loss: reductions, PAD invariance, weighted-mean identity") {
  Rng rng(404);
  int V = 7;
  // one sequence: batch loss equals sequence loss
  {
    Batch<double> b;
    b.batch = 1;
    b.len = 4;
    b.target_ids = {2, 4, 6, 1};
    b.mask = {1, 1, 1, 1};
    b.n_tokens = 4;
    auto logits = random_tensor<double>({4, V}, rng);
    double bl = batch_loss<double>(nullptr, logits, b).item();
    double sl = sequence_loss<double>(nullptr, logits, b.target_ids).item();
    CHECK(bl == doctest::Approx(sl).epsilon(1e-12));
  }
  // two sequences: token-weighted mean of the per-sequence losses (Eq. 5
  // versus Eq. 4), and appending PAD never changes the loss
  for (int trial = 0; trial < 20; ++trial) {
    int t1 = static_cast<int>(rng.uniform_int(1, 6));
    int t2 = static_cast<int>(rng.uniform_int(1, 6));
    int len = std::max(t1, t2) + static_cast<int>(rng.uniform_int(0, 3));  // extra PAD columns
    Batch<double> b;
    b.batch = 2;
    b.len = len;
    b.target_ids.assign(static_cast<size_t>(2 * len), Vocabulary::kPad);
    b.mask.assign(static_cast<size_t>(2 * len), 0.0);
    std::vector<int32_t> s1(static_cast<size_t>(t1)), s2(static_cast<size_t>(t2));
    for (int i = 0; i < t1; ++i) {
      s1[static_cast<size_t>(i)] = static_cast<int32_t>(rng.uniform_int(0, V - 1));
      b.target_ids[static_cast<size_t>(i)] = s1[static_cast<size_t>(i)];
      b.mask[static_cast<size_t>(i)] = 1.0;
    }
    for (int i = 0; i < t2; ++i) {
      s2[static_cast<size_t>(i)] = static_cast<int32_t>(rng.uniform_int(0, V - 1));
      b.target_ids[static_cast<size_t>(len + i)] = s2[static_cast<size_t>(i)];
      b.mask[static_cast<size_t>(len + i)] = 1.0;
    }
    b.n_tokens = t1 + t2;
    auto logits = random_tensor<double>({2 * len, V}, rng);
    double bl = batch_loss<double>(nullptr, logits, b).item();

    auto row1 = ops::slice_block<double>(nullptr, logits, 0, t1, 0, V);
    auto row2 = ops::slice_block<double>(nullptr, logits, len, len + t2, 0, V);
    double l1 = sequence_loss<double>(nullptr, row1, s1).item();
    double l2 = sequence_loss<double>(nullptr, row2, s2).item();
    double weighted = (t1 * l1 + t2 * l2) / (t1 + t2);
    CHECK(std::fabs(bl - weighted) <= 1e-10);
  }
}

TEST_CASE("make_batch: centering, padding colors, teacher alignment, rejection") {
  Vocabulary vocab = Vocabulary::standard();
  Sample s;
  s.image = Image(10, 10, 0.0f);
  s.image.at(0, 0) = 0.2f;
  s.image.at(0, 9) = 0.4f;
  s.image.at(9, 0) = 0.6f;
  s.image.at(9, 9) = 0.8f;
  s.transcript = "ab\ncd";
  Rng rng(5);
  Batch<float> b = make_batch<float>({s}, vocab, 20, 20, Mode::kEval, "corner_max", 100, rng);
  // centered at (5,5)
  CHECK(b.images.data()[5 * 20 + 5] == 0.2f);
  CHECK(b.images.data()[14 * 20 + 14] == 0.8f);
  // corner-max padding: max corner is 0.8
  CHECK(b.images.data()[0] == 0.8f);
  CHECK(b.images.data()[19 * 20 + 19] == 0.8f);

  Batch<float> z = make_batch<float>({s}, vocab, 20, 20, Mode::kEval, "zero", 100, rng);
  CHECK(z.images.data()[0] == 0.0f);

  // shifted pair: target is input shifted left with EOS last; mask counts n
  auto seq = vocab.encode(s.transcript);
  CHECK(b.n_tokens == static_cast<int64_t>(seq.size()));
  CHECK(b.input_ids[0] == Vocabulary::kBos);
  for (size_t i = 0; i + 1 < seq.size(); ++i) CHECK(b.input_ids[i + 1] == seq[i]);
  for (size_t i = 0; i < seq.size(); ++i) CHECK(b.target_ids[i] == seq[i]);
  // lines advance after the newline token
  CHECK(b.lines[0] == 1);
  std::vector<int> expect_lines = token_line_numbers(b.input_ids, vocab.newline_id(), 100);
  for (size_t i = 0; i < seq.size(); ++i) CHECK(b.lines[i] == expect_lines[i]);

  Sample big;
  big.image = Image(30, 10, 0.0f);
  big.transcript = "x";
  CHECK_THROWS_AS(make_batch<float>({big}, vocab, 20, 20, Mode::kEval, "zero", 100, rng),
                  contract_error);

  // train mode places uniformly: offsets vary across draws
  Sample small;
  small.image = Image(4, 4, 1.0f);
  small.transcript = "x";
  bool moved = false;
  Batch<float> first = make_batch<float>({small}, vocab, 32, 32, Mode::kTrain, "zero", 100, rng);
  for (int trial = 0; trial < 10 && !moved; ++trial) {
    Batch<float> again = make_batch<float>({small}, vocab, 32, 32, Mode::kTrain, "zero", 100, rng);
    moved = again.images.values()[0] != first.images.values()[0] ||
            !std::equal(again.images.data(), again.images.data() + again.images.size(),
                        first.images.data());
  }
  CHECK(moved);
}

TEST_CASE("checkpoint save/load round-trip and mismatch reporting") {
  auto dir = std::filesystem::temp_directory_path() / "pagetext_ckpt_test";
  std::filesystem::create_directories(dir);
  Checkpoint ckpt;
  Rng rng(6);
  ckpt.step = 1234;
  ckpt.val_cer = 0.125;
  ckpt.config_text = "[run]\nseed = 7\n";
  ckpt.tensors.emplace_back("w1", random_tensor<float>({3, 4}, rng));
  ckpt.tensors.emplace_back("w2", random_tensor<float>({5}, rng));
  ckpt.tensors.emplace_back("adam.m.w1", random_tensor<float>({3, 4}, rng));
  std::string path = (dir / "t.ptck").string();
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 1234);
  CHECK(back.val_cer == 0.125);
  CHECK(back.config_text == ckpt.config_text);
  REQUIRE(back.tensors.size() == 3);
  for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ckpt.tensors[i].first);
    REQUIRE(back.tensors[i].second.shape() == ckpt.tensors[i].second.shape());
    for (int64_t j = 0; j < ckpt.tensors[i].second.size(); ++j) {
      CHECK(back.tensors[i].second.data()[j] == ckpt.tensors[i].second.data()[j]);
    }
  }

  // loading into differently shaped params names the offender
  std::vector<std::pair<std::string, Tensor<float>>> params;
  params.emplace_back("w1", Tensor<float>::zeros({3, 4}));
  params.emplace_back("w2", Tensor<float>::zeros({9}));
  try {
    load_into_params(back, params);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    CHECK(std::string(e.what()).find("w2") != std::string::npos);
  }

  // missing parameter is reported too
  std::vector<std::pair<std::string, Tensor<float>>> more;
  more.emplace_back("w1", Tensor<float>::zeros({3, 4}));
  more.emplace_back("w2", Tensor<float>::zeros({5}));
  more.emplace_back("w3", Tensor<float>::zeros({2}));
  try {
    load_into_params(back, more);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    CHECK(std::string(e.what()).find("w3") != std::string::npos);
  }

  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ptck").string()), io_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  RunConfig cfg = tiny_run_cfg();
  cfg.train.learning_rate = 0.0;
  Vocabulary vocab = Vocabulary::standard();
  Trainer trainer(cfg, vocab);
  std::vector<std::vector<float>> before;
  for (auto& [n, t] : trainer.model().params()) {
    before.emplace_back(t.data(), t.data() + t.size());
  }
  Sample s = tiny_sample("tide");
  Rng rng(8);
  auto batch = make_batch<float>({s, s}, vocab, 16, 64, Mode::kTrain, "zero", 100, rng);
  for (int i = 0; i < 3; ++i) trainer.apply_update({batch});
  size_t idx = 0;
  for (auto& [n, t] : trainer.model().params()) {
    for (int64_t j = 0; j < t.size(); ++j) CHECK(t.data()[j] == before[idx][static_cast<size_t>(j)]);
    ++idx;
  }
}

TEST_CASE("gradient accumulation matches the single large batch") {
  Vocabulary vocab = Vocabulary::standard();
  Sample s1 = tiny_sample("high");
  Sample s2 = tiny_sample("low");
  Sample s3 = tiny_sample("fog");
  Sample s4 = tiny_sample("gale 8");
  Rng rng(9);
  auto all = make_batch<float>({s1, s2, s3, s4}, vocab, 16, 64, Mode::kEval, "zero", 100, rng);
  auto half1 = make_batch<float>({s1, s2}, vocab, 16, 64, Mode::kEval, "zero", 100, rng);
  auto half2 = make_batch<float>({s3, s4}, vocab, 16, 64, Mode::kEval, "zero", 100, rng);

  RunConfig cfg = tiny_run_cfg();
  Trainer one(cfg, vocab);
  Trainer two(cfg, vocab);  // same seed: identical init
  one.apply_update({all});
  two.apply_update({half1, half2});
  auto& pa = one.model().params();
  auto& pb = two.model().params();
  double worst = 0;
  for (size_t i = 0; i < pa.size(); ++i) {
    for (int64_t j = 0; j < pa[i].second.size(); ++j) {
      worst = std::max(worst, static_cast<double>(std::fabs(
                                  pa[i].second.data()[j] - pb[i].second.data()[j])));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("end-to-end micro gradient check") {
  // double-precision micro model over the full encoder+decoder+loss path
  ModelConfig cfg;
  cfg.decoder_layers = 1;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.d_ff = 12;
  cfg.dropout = 0.0;
  cfg.attention_window = 3;
  cfg.line_number_encoding = true;
  cfg.max_lines = 10;
  cfg.encoder_widths = {2, 3};
  cfg.encoder_blocks = {1, 1};
  cfg.encoder_norm = "group";
  int V = 11;
  PageModel<double> model(cfg, V, 2718);

  Rng imgrng(10);
  auto img = random_tensor<double>({1, 1, 8, 16}, imgrng, 0.0, 1.0);
  std::vector<int32_t> input = {1, 4, 5, 6};
  std::vector<int32_t> target = {4, 5, 6, 2};
  std::vector<int> lines = {1, 1, 2, 2};
  Batch<double> b;
  b.batch = 1;
  b.len = 4;
  b.input_ids = input;
  b.target_ids = target;
  b.lines = lines;
  b.mask = {1, 1, 1, 1};
  b.n_tokens = 4;

  std::vector<Tensor<double>> params;
  for (auto& [name, t] : model.params()) params.push_back(t);
  double err = max_rel_grad_error(params, [&](Tape<double>* tape) {
    auto logits = model.forward(tape, img, b.input_ids, b.lines, 1, b.len, Mode::kTrain, nullptr);
    return batch_loss(tape, logits, b);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("trainer run: logging, checkpoints, best selection, determinism") {
  auto dir = std::filesystem::temp_directory_path() / "pagetext_train_test";
  std::filesystem::remove_all(dir);
  RunConfig cfg = tiny_run_cfg();
  cfg.train.updates = 6;
  cfg.train.eval_interval = 3;
  cfg.train.log_interval = 2;
  Vocabulary vocab = Vocabulary::standard();

  std::vector<Sample> pool = {tiny_sample("ebb"), tiny_sample("flow")};
  std::vector<Sample> val = {pool[0], pool[1]};

  auto run_once = [&](const std::string& sub) {
    Trainer trainer(cfg, vocab);
    size_t cursor = 0;
    std::vector<std::string> log;
    TrainResult res = trainer.run(
        [&]() { return pool[cursor++ % pool.size()]; }, val, (dir / sub).string(),
        [&](const std::string& line) { log.push_back(line); });
    return std::make_pair(res, log);
  };
  auto [res1, log1] = run_once("a");
  auto [res2, log2] = run_once("b");

  CHECK(res1.steps == 6);
  CHECK(std::filesystem::exists(res1.best_path));
  CHECK(res1.best_val_cer >= 0.0);
  // monotone step numbers in the log
  int64_t last = -1;
  for (const auto& line : log1) {
    if (line.rfind("step=", 0) == 0) {
      int64_t s = std::stoll(line.substr(5));
      CHECK(s >= last);
      last = s;
    }
  }
  // same seed, same data: identical logs apart from wall-clock timings
  auto strip_wall = [](std::vector<std::string> log) {
    for (auto& line : log) {
      size_t p = line.find(" wall=");
      if (p != std::string::npos) line.erase(p);
    }
    return log;
  };
  CHECK(strip_wall(log1) == strip_wall(log2));
  std::ifstream f1(res1.best_path, std::ios::binary);
  std::ifstream f2(res2.best_path, std::ios::binary);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);

  // reload: decoding after a round-trip equals decoding before
  Trainer reload(cfg, vocab);
  reload.load(load_checkpoint(res1.best_path));
  Trainer original(cfg, vocab);
  original.load(load_checkpoint(res1.best_path));
  std::string t1 = reload.transcribe(pool[0].image);
  std::string t2 = original.transcribe(pool[0].image);
  CHECK(t1 == t2);

  // best checkpoint CER is the minimum over saved evaluations
  Checkpoint best = load_checkpoint(res1.best_path);
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0) {
      Checkpoint other = load_checkpoint(entry.path().string());
      CHECK(best.val_cer <= other.val_cer + 1e-12);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("micro model overfits one sample") {
  RunConfig cfg = tiny_run_cfg();
  cfg.model.d_model = 32;
  cfg.model.d_ff = 64;
  cfg.train.learning_rate = 2e-3;
  Vocabulary vocab = Vocabulary::standard();
  Trainer trainer(cfg, vocab);
  Sample s = tiny_sample("at 7:05");
  Rng rng(11);
  auto batch = make_batch<float>({s}, vocab, 16, 64, Mode::kEval, "corner_max", 100, rng);
  double loss = 1e9;
  for (int i = 0; i < 300 && loss > 0.01; ++i) loss = trainer.apply_update({batch});
  CHECK(loss < 0.05);
  CHECK(trainer.transcribe(s.image) == s.transcript);
}
