#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "fusion/attention.hpp"
#include "fusion/common.hpp"

namespace fusion {

struct MrcExample {
  std::string id;
  std::vector<std::string> context_tokens;
  std::vector<std::string> question_tokens;
  std::vector<std::string> pos;  // context side; empty when absent
  std::vector<std::string> ner;
  int answer_start = 0;
  int answer_end = 0;
  std::vector<std::string> answers;

  void validate() const;  // span bounds, tag lengths
};

inline constexpr std::array<const char*, 3> kNliLabels{"entailment", "contradiction",
                                                       "neutral"};

struct NliExample {
  std::string id;
  std::vector<std::string> premise_tokens;
  std::vector<std::string> hypothesis_tokens;
  std::string label;

  void validate() const;
  int label_index() const;
};

// Whitespace split; leading/trailing punctuation peels off into its own
// tokens ("Rhine." -> "Rhine", ".").
std::vector<std::string> tokenize(const std::string& text);

// Line-delimited JSON records. Records may carry pre-tokenized fields
// (context_tokens/question_tokens, premise_tokens/hypothesis_tokens) or raw
// strings (context/question, premise/hypothesis) which get tokenized on
// load. Errors name the offending line.
std::vector<MrcExample> load_mrc_dataset(const std::string& path);
std::vector<NliExample> load_nli_dataset(const std::string& path);
void save_mrc_dataset(const std::string& path, const std::vector<MrcExample>& examples);
void save_nli_dataset(const std::string& path, const std::vector<NliExample>& examples);

// Key-value retrieval passages. The "plain" family states facts as
// "<key> holds <value> ."; the "cue" family replaces keys with
// "the <rare> marker" phrases that share their surface template and differ
// only in the rare word, so telling entries apart needs word-level
// information rather than sentence shape. Example ids carry the family
// ("plain-…"/"cue-…"). POS/NER tags come from small closed sets.
struct MrcGenOptions {
  int n_examples = 200;
  int vocab_size = 30;   // distinct keys / values / rare markers
  int min_pairs = 3;     // facts per context
  int max_pairs = 6;
  double cue_fraction = 0.5;
};
std::vector<MrcExample> gen_synthetic_mrc(const MrcGenOptions& opt, std::uint64_t seed);

// Templated premise/hypothesis pairs with rule-determined labels, balanced
// across the three classes to within one example.
std::vector<NliExample> gen_synthetic_nli(int n_examples, std::uint64_t seed);

// SQuAD-style answer normalization: lowercase, drop punctuation characters,
// drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(const std::string& s);

struct EmF1 {
  double em = 0;
  double f1 = 0;
};

// Exact match and token-bag F1 against the best-scoring gold answer.
EmF1 em_f1(const std::string& predicted, const std::vector<std::string>& golds);

std::string span_text(const std::vector<std::string>& tokens, int start, int end);

// One JSON record per attention map; rows are re-checked to sum to one
// before anything is written.
void export_attention(const std::vector<AttentionWeights>& maps, const std::string& example_id,
                      std::ostream& out);
void export_attention(const std::vector<AttentionWeights>& maps, const std::string& example_id,
                      const std::string& path, bool append = false);

}  // namespace fusion
