#include "fusion/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "fusion/rng.hpp"
#include "json.hpp"

namespace fusion {

using nlohmann::json;

namespace {

[[noreturn]] void line_error(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

void MrcExample::validate() const {
  const int m = static_cast<int>(context_tokens.size());
  if (m == 0) throw ValidationError("example " + id + ": empty context");
  if (question_tokens.empty()) throw ValidationError("example " + id + ": empty question");
  if (answer_start < 0 || answer_end < answer_start || answer_end >= m)
    throw ValidationError("example " + id + ": answer span [" +
                          std::to_string(answer_start) + ", " + std::to_string(answer_end) +
                          "] out of range for " + std::to_string(m) + " tokens");
  if (!pos.empty() && static_cast<int>(pos.size()) != m)
    throw ValidationError("example " + id + ": pos tags length " + std::to_string(pos.size()) +
                          " != " + std::to_string(m));
  if (!ner.empty() && static_cast<int>(ner.size()) != m)
    throw ValidationError("example " + id + ": ner tags length " + std::to_string(ner.size()) +
                          " != " + std::to_string(m));
}

void NliExample::validate() const {
  if (premise_tokens.empty() || hypothesis_tokens.empty())
    throw ValidationError("example " + id + ": empty side");
  label_index();
}

int NliExample::label_index() const {
  for (std::size_t i = 0; i < kNliLabels.size(); ++i)
    if (label == kNliLabels[i]) return static_cast<int>(i);
  throw ValidationError("example " + id + ": unknown label '" + label + "'");
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (i < n) {
    while (i < n && space(text[i])) ++i;
    std::size_t j = i;
    while (j < n && !space(text[j])) ++j;
    if (j > i) {
      const std::string word = text.substr(i, j - i);
      std::size_t a = 0, b = word.size();
      while (a < b && punct(word[a])) out.emplace_back(1, word[a++]);
      std::vector<char> trail;
      while (b > a && punct(word[b - 1])) trail.push_back(word[--b]);
      if (b > a) out.push_back(word.substr(a, b - a));
      for (auto it = trail.rbegin(); it != trail.rend(); ++it) out.emplace_back(1, *it);
    }
    i = j;
  }
  return out;
}

std::vector<MrcExample> load_mrc_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<MrcExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad record: ") + e.what());
    }
    MrcExample ex;
    try {
      ex.id = j.value("id", "line-" + std::to_string(line_no));
      if (j.contains("context_tokens"))
        ex.context_tokens = string_list(j.at("context_tokens"));
      else
        ex.context_tokens = tokenize(j.at("context").get<std::string>());
      if (j.contains("question_tokens"))
        ex.question_tokens = string_list(j.at("question_tokens"));
      else
        ex.question_tokens = tokenize(j.at("question").get<std::string>());
      if (j.contains("pos")) ex.pos = string_list(j.at("pos"));
      if (j.contains("ner")) ex.ner = string_list(j.at("ner"));
      ex.answer_start = j.at("answer_start").get<int>();
      ex.answer_end = j.at("answer_end").get<int>();
      if (j.contains("answers")) ex.answers = string_list(j.at("answers"));
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad record: ") + e.what());
    }
    if (ex.answers.empty())
      ex.answers = {span_text(ex.context_tokens, ex.answer_start, ex.answer_end)};
    try {
      ex.validate();
    } catch (const ValidationError& e) {
      line_error(path, line_no, e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<NliExample> load_nli_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<NliExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad record: ") + e.what());
    }
    NliExample ex;
    try {
      ex.id = j.value("id", "line-" + std::to_string(line_no));
      if (j.contains("premise_tokens"))
        ex.premise_tokens = string_list(j.at("premise_tokens"));
      else
        ex.premise_tokens = tokenize(j.at("premise").get<std::string>());
      if (j.contains("hypothesis_tokens"))
        ex.hypothesis_tokens = string_list(j.at("hypothesis_tokens"));
      else
        ex.hypothesis_tokens = tokenize(j.at("hypothesis").get<std::string>());
      ex.label = j.at("label").get<std::string>();
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad record: ") + e.what());
    }
    try {
      ex.validate();
    } catch (const ValidationError& e) {
      line_error(path, line_no, e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_mrc_dataset(const std::string& path, const std::vector<MrcExample>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& ex : examples) {
    json j{{"id", ex.id},
           {"context_tokens", ex.context_tokens},
           {"question_tokens", ex.question_tokens},
           {"answer_start", ex.answer_start},
           {"answer_end", ex.answer_end},
           {"answers", ex.answers}};
    if (!ex.pos.empty()) j["pos"] = ex.pos;
    if (!ex.ner.empty()) j["ner"] = ex.ner;
    out << j.dump() << "\n";
  }
}

void save_nli_dataset(const std::string& path, const std::vector<NliExample>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& ex : examples) {
    json j{{"id", ex.id},
           {"premise_tokens", ex.premise_tokens},
           {"hypothesis_tokens", ex.hypothesis_tokens},
           {"label", ex.label}};
    out << j.dump() << "\n";
  }
}

namespace {

std::string num_token(const char* prefix, std::uint64_t i) {
  return std::string(prefix) + std::to_string(i);
}

void tag_fact(MrcExample& ex, const std::vector<std::string>& toks,
              const std::vector<std::string>& pos, const std::vector<std::string>& ner) {
  ex.context_tokens.insert(ex.context_tokens.end(), toks.begin(), toks.end());
  ex.pos.insert(ex.pos.end(), pos.begin(), pos.end());
  ex.ner.insert(ex.ner.end(), ner.begin(), ner.end());
}

}  // namespace

std::vector<MrcExample> gen_synthetic_mrc(const MrcGenOptions& opt, std::uint64_t seed) {
  if (opt.n_examples < 1 || opt.vocab_size < 2 || opt.min_pairs < 1 ||
      opt.max_pairs < opt.min_pairs)
    throw ConfigError("gen_synthetic_mrc: bad options");
  Rng rng(seed, Rng::stream_key("mrc-gen"));
  std::vector<MrcExample> out;
  out.reserve(static_cast<std::size_t>(opt.n_examples));
  const auto v = static_cast<std::uint64_t>(opt.vocab_size);
  for (int n = 0; n < opt.n_examples; ++n) {
    const bool cue = rng.next_double() < opt.cue_fraction;
    // facts carry distinct subjects, so never ask for more than the vocabulary holds
    const int pairs = std::min(
        opt.vocab_size,
        opt.min_pairs + static_cast<int>(rng.next_below(
                            static_cast<std::uint64_t>(opt.max_pairs - opt.min_pairs + 1))));

    // distinct subject per fact so the asked one is unambiguous
    std::vector<std::uint64_t> subjects;
    while (static_cast<int>(subjects.size()) < pairs) {
      const std::uint64_t s = rng.next_below(v);
      if (std::find(subjects.begin(), subjects.end(), s) == subjects.end())
        subjects.push_back(s);
    }

    MrcExample ex;
    ex.id = (cue ? "cue-" : "plain-") + std::to_string(n);
    std::vector<int> value_pos(static_cast<std::size_t>(pairs));
    std::vector<std::string> values(static_cast<std::size_t>(pairs));
    for (int p = 0; p < pairs; ++p) {
      const std::string value = num_token("v", rng.next_below(v));
      values[static_cast<std::size_t>(p)] = value;
      if (cue) {
        // "the r7 marker holds v3 ." — entries differ only in the rare word
        const std::string rare = num_token("r", subjects[static_cast<std::size_t>(p)]);
        value_pos[static_cast<std::size_t>(p)] = static_cast<int>(ex.context_tokens.size()) + 4;
        tag_fact(ex, {"the", rare, "marker", "holds", value, "."},
                 {"DET", "NOUN", "NOUN", "VERB", "NOUN", "PUNCT"},
                 {"O", "KEY", "O", "O", "VAL", "O"});
      } else {
        const std::string key = num_token("k", subjects[static_cast<std::size_t>(p)]);
        value_pos[static_cast<std::size_t>(p)] = static_cast<int>(ex.context_tokens.size()) + 2;
        tag_fact(ex, {key, "holds", value, "."}, {"NOUN", "VERB", "NOUN", "PUNCT"},
                 {"KEY", "O", "VAL", "O"});
      }
    }

    const int asked = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(pairs)));
    const std::string subject =
        num_token(cue ? "r" : "k", subjects[static_cast<std::size_t>(asked)]);
    if (cue)
      ex.question_tokens = {"what", "does", "the", subject, "marker", "hold", "?"};
    else
      ex.question_tokens = {"what", "does", subject, "hold", "?"};
    ex.answer_start = ex.answer_end = value_pos[static_cast<std::size_t>(asked)];
    ex.answers = {values[static_cast<std::size_t>(asked)]};
    ex.validate();
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<NliExample> gen_synthetic_nli(int n_examples, std::uint64_t seed) {
  if (n_examples < 1) throw ConfigError("gen_synthetic_nli: n_examples must be positive");
  Rng rng(seed, Rng::stream_key("nli-gen"));
  std::vector<NliExample> out;
  out.reserve(static_cast<std::size_t>(n_examples));
  constexpr std::uint64_t kEntities = 12, kAttrs = 12;
  for (int n = 0; n < n_examples; ++n) {
    const std::string entity = num_token("e", rng.next_below(kEntities));
    const std::string attr_a = num_token("q", rng.next_below(kAttrs));
    std::string attr_b = attr_a;
    while (attr_b == attr_a) attr_b = num_token("q", rng.next_below(kAttrs));

    NliExample ex;
    ex.id = "nli-" + std::to_string(n);
    switch (n % 3) {
      case 0:  // entailment: restatement or conjunction elimination
        ex.label = kNliLabels[0];
        if (rng.next_below(2) == 0) {
          ex.premise_tokens = {"the", entity, "is", attr_a, "."};
          ex.hypothesis_tokens = {"the", entity, "is", attr_a, "."};
        } else {
          ex.premise_tokens = {"the", entity, "is", attr_a, "and", attr_b, "."};
          ex.hypothesis_tokens = {"the", entity, "is",
                                  rng.next_below(2) == 0 ? attr_a : attr_b, "."};
        }
        break;
      case 1:  // contradiction: negated restatement
        ex.label = kNliLabels[1];
        ex.premise_tokens = {"the", entity, "is", attr_a, "."};
        ex.hypothesis_tokens = {"the", entity, "is", "not", attr_a, "."};
        break;
      default:  // neutral: unrelated attribute
        ex.label = kNliLabels[2];
        ex.premise_tokens = {"the", entity, "is", attr_a, "."};
        ex.hypothesis_tokens = {"the", entity, "is", attr_b, "."};
        break;
    }
    ex.validate();
    out.push_back(std::move(ex));
  }
  return out;
}

std::string normalize_answer(const std::string& s) {
  std::string kept;
  kept.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    kept.push_back(static_cast<char>(std::tolower(u)));
  }
  std::istringstream words(kept);
  std::string w, out;
  while (words >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

namespace {

double token_bag_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      ++overlap;
      --it->second;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

EmF1 em_f1(const std::string& predicted, const std::vector<std::string>& golds) {
  if (golds.empty()) throw EmptyInputError("em_f1: no gold answers");
  const std::string pred_norm = normalize_answer(predicted);
  const auto pred_tokens = split_ws(pred_norm);
  EmF1 best;
  for (const auto& gold : golds) {
    const std::string gold_norm = normalize_answer(gold);
    if (pred_norm == gold_norm) best.em = 1.0;
    best.f1 = std::max(best.f1, token_bag_f1(pred_tokens, split_ws(gold_norm)));
  }
  return best;
}

std::string span_text(const std::vector<std::string>& tokens, int start, int end) {
  std::string out;
  for (int i = start; i <= end && i < static_cast<int>(tokens.size()); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[static_cast<std::size_t>(i)];
  }
  return out;
}

void export_attention(const std::vector<AttentionWeights>& maps, const std::string& example_id,
                      std::ostream& out) {
  for (const auto& map : maps) {
    for (int i = 0; i < map.rows; ++i) {
      real_t sum = 0;
      for (int j = 0; j < map.cols; ++j) sum += map.at(i, j);
      if (std::abs(sum - real_t(1)) > real_t(1e-9))
        throw ContractError("attention map '" + map.level_tag + "' row " + std::to_string(i) +
                            " sums to " + std::to_string(static_cast<double>(sum)));
    }
    json j{{"example_id", example_id},
           {"level", map.level_tag},
           {"rows", map.rows},
           {"cols", map.cols},
           {"weights", map.weights}};
    out << j.dump() << "\n";
  }
}

void export_attention(const std::vector<AttentionWeights>& maps, const std::string& example_id,
                      const std::string& path, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot write attention export: " + path);
  export_attention(maps, example_id, out);
}

}  // namespace fusion
