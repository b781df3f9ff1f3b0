#pragma once

#include <string>
#include <vector>

namespace simnet {

using Tokens = std::vector<std::string>;

struct EvalItem {
  std::string image_id;
  Tokens hypothesis;
  std::vector<Tokens> references;
};

/// Inputs are already tokenized; nothing here lowercases or splits.
using EvalCorpus = std::vector<EvalItem>;

/// Corpus BLEU-1..max_n from pooled clipped n-gram counts, brevity penalty
/// against the closest reference length, no smoothing.
std::vector<double> bleu(const EvalCorpus& corpus, std::size_t max_n = 4);

/// Mean over images of the best LCS F-measure against any reference.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);
double rouge_l_sentence(const Tokens& hyp, const Tokens& ref, double beta = 1.2);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Plain CIDEr: TF-IDF n-gram vectors (n = 1..4) with
/// idf = log(N / max(1, df)), cosine against each reference averaged over
/// references, then over n, then over images. No length penalty, no x10.
double cider(const EvalCorpus& corpus);
/// Per-image CIDEr values in corpus order.
std::vector<double> cider_per_image(const EvalCorpus& corpus);

struct MetricReport {
  std::vector<double> bleu;  // BLEU-1..4
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t images = 0;
};

MetricReport evaluate(const EvalCorpus& corpus);

/// One line per metric: name TAB value TAB image count.
std::string format_report(const MetricReport& report);

}  // namespace simnet
