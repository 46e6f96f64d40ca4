#include "e2llm/metrics.hpp"

#include "e2llm/chunker.hpp"  // utf8 helpers

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace e2llm {

namespace {

bool is_punct_cp(char32_t c) {
  if (c > 127) {
    // General punctuation block plus CJK punctuation; everything else above
    // ASCII is kept as word content.
    return (c >= 0x2000 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F);
  }
  return (c >= U'!' && c <= U'/') || (c >= U':' && c <= U'@') || (c >= U'[' && c <= U'`') ||
         (c >= U'{' && c <= U'~');
}

char32_t to_lower_cp(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  return c;
}

double f_measure(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace

std::vector<std::string> eval_tokenize(const std::string& text) {
  const auto cps = utf8_decode(text);
  std::vector<std::string> out;
  std::vector<char32_t> cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(utf8_encode(cur, 0, cur.size()));
      cur.clear();
    }
  };
  for (char32_t c : cps) {
    if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r') {
      flush();
    } else if (is_punct_cp(c)) {
      // stripped, not tokenized
    } else {
      cur.push_back(to_lower_cp(c));
    }
  }
  flush();
  return out;
}

double rouge_n(const std::string& candidate, const std::string& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  const auto cand = eval_tokenize(candidate);
  const auto ref = eval_tokenize(reference);
  const auto cc = ngram_counts(cand, n);
  const auto rc = ngram_counts(ref, n);
  long cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, k] : cc) cand_total += k;
  for (const auto& [g, k] : rc) ref_total += k;
  for (const auto& [g, k] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(k, it->second);
  }
  if (cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(overlap) / cand_total;
  const double r = static_cast<double>(overlap) / ref_total;
  return f_measure(p, r);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
  const auto cand = eval_tokenize(candidate);
  const auto ref = eval_tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const std::size_t m = cand.size(), n = ref.size();
  std::vector<std::vector<int>> dp(m + 1, std::vector<int>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      dp[i][j] = (cand[i - 1] == ref[j - 1]) ? dp[i - 1][j - 1] + 1
                                             : std::max(dp[i - 1][j], dp[i][j - 1]);
  const int lcs = dp[m][n];
  const double p = static_cast<double>(lcs) / m;
  const double r = static_cast<double>(lcs) / n;
  return f_measure(p, r);
}

double g_mean(double r1, double r2, double rl) {
  if (r1 <= 0.0 || r2 <= 0.0 || rl <= 0.0) return 0.0;
  return std::cbrt(r1 * r2 * rl);
}

RougeScores rouge_all(const std::string& candidate, const std::string& reference) {
  RougeScores s;
  s.r1 = rouge_n(candidate, reference, 1);
  s.r2 = rouge_n(candidate, reference, 2);
  s.rl = rouge_l(candidate, reference);
  s.g_mean = g_mean(s.r1, s.r2, s.rl);
  return s;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> kStopwords = {
      "a",  "an",   "the",  "is",  "are", "was",  "were", "be",  "of",  "in",
      "on", "at",   "to",   "and", "or",  "it",   "this", "that", "with", "as",
      "by", "for",  "from", "but", "not", "he",   "she",  "they", "we",   "you"};
  return kStopwords;
}

QAScores qa_scores(const std::string& candidate, const std::string& reference,
                   const std::set<std::string>& stopwords) {
  auto normalize = [&stopwords](const std::string& s) {
    std::vector<std::string> toks;
    for (auto& t : eval_tokenize(s))
      if (!stopwords.count(t)) toks.push_back(std::move(t));
    return toks;
  };
  const auto cand = normalize(candidate);
  const auto ref = normalize(reference);
  QAScores out;
  if (ref.empty()) {
    out.warning = true;
    return out;
  }
  if (cand.empty()) return out;
  std::map<std::string, int> rc;
  for (const auto& t : ref) ++rc[t];
  long overlap = 0;
  for (const auto& t : cand) {
    auto it = rc.find(t);
    if (it != rc.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  out.precision = static_cast<double>(overlap) / cand.size();
  out.recall = static_cast<double>(overlap) / ref.size();
  out.f1 = f_measure(out.precision, out.recall);
  return out;
}

}  // namespace e2llm
