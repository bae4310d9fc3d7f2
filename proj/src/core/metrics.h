#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pagetext {

// Unit-cost Levenshtein distance over Unicode scalar values.
int64_t levenshtein(std::string_view a, std::string_view b);

// levenshtein(pred, gt) / |gt| in scalars. Throws contract_error for empty
// ground truth; callers report those samples separately.
double cer(std::string_view pred, std::string_view gt);

struct NormalizeRules {
  bool strip_tags = true;
  bool strip_indent = true;
  bool lowercase = true;
  // occurrences removed when strip_tags is set; defaults to the standard
  // markup tags
  std::vector<std::string> tags;
};

// Text normalization applied before cross-engine comparison: markup removal,
// per-line leading-whitespace removal, lowercasing. Idempotent.
std::string normalize_for_comparison(std::string_view text, const NormalizeRules& rules);

struct EvalRow {
  std::string id;
  int64_t distance = 0;
  int64_t gt_len = 0;
  std::optional<double> cer;  // absent when gt is empty
  bool truncated = false;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_cer = 0.0;    // over samples with nonempty ground truth
  double corpus_cer = 0.0;  // sum of distances / sum of gt lengths
  int64_t total_gt_len = 0;
  int64_t total_distance = 0;
  int64_t empty_gt_count = 0;

  std::string to_tsv() const;
};

// pairs of (id, pred, gt, truncated)
struct EvalPair {
  std::string id;
  std::string pred;
  std::string gt;
  bool truncated = false;
};

// Throws contract_error when every ground truth is empty (corpus CER
// undefined).
EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs);

double corpus_cer(const std::vector<EvalPair>& pairs);

}  // namespace pagetext
