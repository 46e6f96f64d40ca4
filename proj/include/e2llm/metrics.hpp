#pragma once

#include <set>
#include <string>
#include <vector>

namespace e2llm {

struct RougeScores {
  double r1 = 0.0;
  double r2 = 0.0;
  double rl = 0.0;
  double g_mean = 0.0;
};

struct QAScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool warning = false;  // reference empty after normalization
};

/// Shared eval tokenization: lowercase, split on whitespace, strip
/// punctuation characters.
std::vector<std::string> eval_tokenize(const std::string& text);

/// Clipped n-gram overlap reported as the F-measure of n-gram precision and
/// recall. Both sides empty scores 0.
double rouge_n(const std::string& candidate, const std::string& reference, int n);

/// LCS-based F-measure.
double rouge_l(const std::string& candidate, const std::string& reference);

/// Cube root of the product; 0 if any component is 0.
double g_mean(double r1, double r2, double rl);

RougeScores rouge_all(const std::string& candidate, const std::string& reference);

/// The fixed stopword list shipped with this project (see README).
const std::set<std::string>& default_stopwords();

/// Normalized unigram precision/recall/F1: lowercase, collapse whitespace,
/// strip punctuation, drop stopwords, then multiset unigram overlap.
QAScores qa_scores(const std::string& candidate, const std::string& reference,
                   const std::set<std::string>& stopwords = default_stopwords());

}  // namespace e2llm
