#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fusion/dropout.hpp"
#include "fusion/fusionnet.hpp"
#include "fusion/heads.hpp"
#include "fusion/rng.hpp"

namespace fusion {

struct AdamaxConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-moment / infinity-norm optimizer over a fixed parameter list.
// theta -= (lr / (1 - beta1^t)) * m / (u + eps) with m the decayed mean
// gradient and u the decayed coordinate-wise max |gradient|.
class Adamax {
 public:
  explicit Adamax(std::vector<Tensor> params, AdamaxConfig cfg = {});

  void step();
  void zero_grads();
  long t() const { return t_; }
  const AdamaxConfig& config() const { return cfg_; }

  struct State {
    long t = 0;
    std::vector<std::vector<real_t>> m;
    std::vector<std::vector<real_t>> u;
  };
  State snapshot() const;
  void restore(const State& s);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real_t>> m_, u_;
  long t_ = 0;
  AdamaxConfig cfg_;
};

// ---------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------

struct MrcModel {
  ModelConfig cfg;
  FusionNetParams net;
  SpanHeadParams head;

  void visit(const ParamVisitor& fn);
  std::vector<Tensor> trainable_tensors();
};

MrcModel make_mrc_model(const ModelConfig& cfg, Vocab word_vocab, Vocab pos_vocab,
                        Vocab ner_vocab, std::uint64_t seed);
// Vocabularies built from the training split.
MrcModel make_mrc_model(const ModelConfig& cfg, const std::vector<MrcExample>& train,
                        std::uint64_t seed);

struct NliModel {
  NliConfig cfg;
  NliParams params;

  void visit(const ParamVisitor& fn);
  std::vector<Tensor> trainable_tensors();
};

NliModel make_nli_model(const NliConfig& cfg, const std::vector<NliExample>& train,
                        std::uint64_t seed);

// Full forward to the span distribution (fusion body plus head).
SpanDistribution mrc_span_distribution(Graph& g, const MrcModel& model, const MrcExample& ex,
                                       DropoutContext& drop, FusionState* state_out = nullptr);

std::pair<int, int> mrc_predict(const MrcModel& model, const MrcExample& ex);

struct MrcEval {
  double em = 0;
  double f1 = 0;
};
MrcEval evaluate_mrc(const MrcModel& model, const std::vector<MrcExample>& data);
double evaluate_nli(const NliModel& model, const std::vector<NliExample>& data);

// ---------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------

struct TrainConfig {
  AdamaxConfig opt;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
};

// One pass over the data in a seeded shuffle: gradients accumulate over
// batch_size examples, get divided by the batch count, and feed one
// optimizer step. Returns the mean loss (NaN as soon as a loss stops being
// finite). Dropout is live here and only here.
double train_epoch_mrc(MrcModel& model, const std::vector<MrcExample>& data, Adamax& opt,
                       const TrainConfig& cfg, int epoch);
double train_epoch_nli(NliModel& model, const std::vector<NliExample>& data, Adamax& opt,
                       const TrainConfig& cfg, int epoch);

// Majority vote over the models' answer strings; ties break by a seeded
// draw among the tied answers.
std::pair<int, int> ensemble_predict(const std::vector<const MrcModel*>& models,
                                     const MrcExample& ex, Rng& tie_rng);

// ---------------------------------------------------------------------
// Checkpoints: <prefix>.json manifest + <prefix>.bin raw little-endian
// float64 blob. The manifest carries the format version, the full config,
// the vocabularies in row order, the tensor directory (name/shape/offset/
// length into the blob), optional optimizer state, and the PRNG position
// (seed, epoch). Loads are all-or-nothing.
// ---------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct RngCursor {
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::string& prefix, const MrcModel& model, const Adamax* opt,
                     const RngCursor& rng);
void save_checkpoint(const std::string& prefix, const NliModel& model, const Adamax* opt,
                     const RngCursor& rng);

struct LoadedMrc {
  MrcModel model;
  std::optional<Adamax::State> opt;
  RngCursor rng;
};
struct LoadedNli {
  NliModel model;
  std::optional<Adamax::State> opt;
  RngCursor rng;
};

LoadedMrc load_mrc_checkpoint(const std::string& prefix);
LoadedNli load_nli_checkpoint(const std::string& prefix);
// Task tag recorded in a manifest ("mrc" or "nli").
std::string checkpoint_task(const std::string& prefix);

}  // namespace fusion
