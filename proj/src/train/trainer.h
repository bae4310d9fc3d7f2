#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/config.h"
#include "core/metrics.h"
#include "core/vocab.h"
#include "model/model.h"
#include "train/batch.h"
#include "train/checkpoint.h"

namespace pagetext {

using SampleFn = std::function<Sample()>;
using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  std::string best_path;
  double best_val_cer = -1.0;
  int64_t steps = 0;
};

// Forward/backward/ADAM loop with token-weighted gradient accumulation:
// micro-batch losses are combined so one update equals a single large batch
// under the batch objective. Checkpoints are written at every evaluation;
// the lowest validation corpus CER wins.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const Vocabulary& vocab);

  PageModel<float>& model() { return *model_; }
  const Vocabulary& vocab() const { return vocab_; }
  int64_t step() const { return step_; }

  // one optimizer update over the accumulated micro-batches; returns the
  // batch loss over the union (Eq. is per token)
  double apply_update(const std::vector<Batch<float>>& micro_batches);

  // builds micro-batches from the stream and applies one update
  double update_from_stream(const SampleFn& next);

  // greedy-decode every sample (centered placement) and return the report
  EvalReport evaluate(const std::vector<Sample>& val);

  std::string transcribe(const Image& image, bool* truncated = nullptr);

  TrainResult run(const SampleFn& next, const std::vector<Sample>& val,
                  const std::string& out_dir, const LogFn& log);

  Checkpoint make_checkpoint() const;
  void load(const Checkpoint& ckpt);

 private:
  void save_eval_checkpoint(const std::string& out_dir, double val_cer, const LogFn& log);

  RunConfig cfg_;
  Vocabulary vocab_;
  std::unique_ptr<PageModel<float>> model_;
  std::vector<std::vector<float>> adam_m_, adam_v_;
  int64_t step_ = 0;
  Rng dropout_rng_;
  Rng placement_rng_;

  struct Saved {
    int64_t step;
    double cer;
    std::string path;
  };
  std::vector<Saved> saved_;
  int best_index_ = -1;
};

}  // namespace pagetext
