#include "core/metrics.h"

#include <algorithm>
#include <sstream>

#include "core/errors.h"
#include "core/utf8.h"

namespace pagetext {

int64_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<uint32_t> s = utf8_decode(a);
  std::vector<uint32_t> t = utf8_decode(b);
  if (s.size() < t.size()) std::swap(s, t);  // keep the row short
  size_t n = t.size();
  std::vector<int64_t> row(n + 1);
  for (size_t j = 0; j <= n; ++j) row[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= s.size(); ++i) {
    int64_t diag = row[0];
    row[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= n; ++j) {
      int64_t old = row[j];
      int64_t subst = diag + (s[i - 1] == t[j - 1] ? 0 : 1);
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
      diag = old;
    }
  }
  return row[n];
}

double cer(std::string_view pred, std::string_view gt) {
  int64_t len = static_cast<int64_t>(utf8_decode(gt).size());
  if (len == 0) throw contract_error("cer: empty ground truth");
  return static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(len);
}

std::string normalize_for_comparison(std::string_view text, const NormalizeRules& rules) {
  std::string s(text);
  if (rules.strip_tags) {
    std::vector<std::string> tags = rules.tags;
    if (tags.empty()) {
      tags = {"<end-of-region>", "<math>", "<deleted-text>", "<table>", "<drawing>", "<col>"};
    }
    for (const std::string& tag : tags) {
      size_t pos = 0;
      while ((pos = s.find(tag, pos)) != std::string::npos) s.erase(pos, tag.size());
    }
  }
  if (rules.strip_indent) {
    std::string out;
    out.reserve(s.size());
    bool at_line_start = true;
    for (char c : s) {
      if (at_line_start && (c == ' ' || c == '\t')) continue;
      at_line_start = c == '\n';
      out.push_back(c);
    }
    s = std::move(out);
  }
  if (rules.lowercase) {
    for (char& c : s) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
  }
  return s;
}

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs) {
  EvalReport rep;
  double cer_sum = 0.0;
  int64_t nonempty = 0;
  for (const EvalPair& p : pairs) {
    EvalRow row;
    row.id = p.id;
    row.distance = levenshtein(p.pred, p.gt);
    row.gt_len = static_cast<int64_t>(utf8_decode(p.gt).size());
    row.truncated = p.truncated;
    if (row.gt_len > 0) {
      row.cer = static_cast<double>(row.distance) / static_cast<double>(row.gt_len);
      cer_sum += *row.cer;
      ++nonempty;
    } else {
      ++rep.empty_gt_count;
    }
    rep.total_distance += row.distance;
    rep.total_gt_len += row.gt_len;
    rep.rows.push_back(std::move(row));
  }
  if (rep.total_gt_len == 0) {
    throw contract_error("corpus CER undefined: every ground truth is empty");
  }
  rep.corpus_cer = static_cast<double>(rep.total_distance) / static_cast<double>(rep.total_gt_len);
  rep.mean_cer = nonempty > 0 ? cer_sum / static_cast<double>(nonempty) : 0.0;
  return rep;
}

double corpus_cer(const std::vector<EvalPair>& pairs) {
  return evaluate_pairs(pairs).corpus_cer;
}

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os << "id\tdistance\tgt_len\tcer\ttruncated\n";
  os.precision(17);
  for (const EvalRow& r : rows) {
    os << r.id << '\t' << r.distance << '\t' << r.gt_len << '\t';
    if (r.cer) {
      os << *r.cer;
    } else {
      os << "nan";
    }
    os << '\t' << (r.truncated ? 1 : 0) << '\n';
  }
  os << "mean\t\t\t" << mean_cer << "\t\n";
  os << "corpus\t\t\t" << corpus_cer << "\t\n";
  return os.str();
}

}  // namespace pagetext
