#include "simnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

namespace simnet {

namespace {

using NgramCounts = std::map<std::string, std::size_t>;

NgramCounts ngrams(const Tokens& words, std::size_t n) {
  NgramCounts out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string key = words[i];
    for (std::size_t j = 1; j < n; ++j) key += ' ' + words[i + j];
    ++out[key];
  }
  return out;
}

void require_nonempty(const EvalCorpus& corpus, const char* metric) {
  if (corpus.empty()) throw std::invalid_argument(std::string(metric) + ": empty corpus");
  for (const auto& item : corpus) {
    if (item.references.empty()) {
      throw std::invalid_argument(std::string(metric) + ": image " + item.image_id + " has no references");
    }
  }
}

}  // namespace

std::vector<double> bleu(const EvalCorpus& corpus, std::size_t max_n) {
  require_nonempty(corpus, "bleu");
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be at least 1");
  std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (const auto& item : corpus) {
    const double c = static_cast<double>(item.hypothesis.size());
    hyp_len += c;
    double closest = static_cast<double>(item.references.front().size());
    for (const auto& ref : item.references) {
      const double r = static_cast<double>(ref.size());
      const double dr = std::abs(r - c), dbest = std::abs(closest - c);
      if (dr < dbest || (dr == dbest && r < closest)) closest = r;
    }
    ref_len += closest;
    for (std::size_t n = 1; n <= max_n; ++n) {
      NgramCounts max_ref;
      for (const auto& ref : item.references)
        for (const auto& [g, cnt] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : ngrams(item.hypothesis, n)) {
        auto it = max_ref.find(g);
        matched[n - 1] += static_cast<double>(std::min(cnt, it == max_ref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(cnt);
      }
    }
  }
  const double bp = hyp_len == 0 ? 0.0 : (hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len));
  std::vector<double> scores(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (total[n - 1] == 0 || matched[n - 1] == 0) zero = true;
    if (!zero) log_sum += std::log(matched[n - 1] / total[n - 1]);
    scores[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sentence(const Tokens& hyp, const Tokens& ref, double beta) {
  const std::size_t lcs = lcs_length(hyp, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(const EvalCorpus& corpus, double beta) {
  require_nonempty(corpus, "rouge_l");
  double sum = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& ref : item.references) best = std::max(best, rouge_l_sentence(item.hypothesis, ref, beta));
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

std::vector<double> cider_per_image(const EvalCorpus& corpus) {
  require_nonempty(corpus, "cider");
  if (corpus.size() < 2) {
    throw std::invalid_argument("cider: needs at least 2 images for document frequencies; evaluate a larger split");
  }
  constexpr std::size_t kMaxN = 4;
  const double n_images = static_cast<double>(corpus.size());

  std::map<std::string, std::size_t> df;
  for (const auto& item : corpus) {
    std::set<std::string> seen;
    for (const auto& ref : item.references)
      for (std::size_t n = 1; n <= kMaxN; ++n)
        for (const auto& [g, c] : ngrams(ref, n)) seen.insert(g);
    for (const auto& g : seen) ++df[g];
  }
  auto idf = [&](const std::string& g) {
    auto it = df.find(g);
    const double f = it == df.end() ? 0.0 : static_cast<double>(it->second);
    return std::log(n_images / std::max(1.0, f));
  };
  auto weigh = [&](const NgramCounts& counts) {
    std::map<std::string, double> v;
    for (const auto& [g, c] : counts) v[g] = static_cast<double>(c) * idf(g);
    return v;
  };
  auto cosine = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [g, w] : a) {
      na += w * w;
      if (auto it = b.find(g); it != b.end()) dot += w * it->second;
    }
    for (const auto& [g, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& item : corpus) {
    double total = 0.0;
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto hyp = weigh(ngrams(item.hypothesis, n));
      double per_ref = 0.0;
      for (const auto& ref : item.references) per_ref += cosine(hyp, weigh(ngrams(ref, n)));
      total += per_ref / static_cast<double>(item.references.size());
    }
    scores.push_back(total / static_cast<double>(kMaxN));
  }
  return scores;
}

double cider(const EvalCorpus& corpus) {
  const auto per_image = cider_per_image(corpus);
  double sum = 0.0;
  for (double s : per_image) sum += s;
  return sum / static_cast<double>(per_image.size());
}

MetricReport evaluate(const EvalCorpus& corpus) {
  MetricReport r;
  r.bleu = bleu(corpus, 4);
  r.rouge_l = rouge_l(corpus);
  r.cider = cider(corpus);
  r.images = corpus.size();
  return r;
}

std::string format_report(const MetricReport& report) {
  std::string out;
  char buf[96];
  auto line = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "\t%.17g\t%zu\n", v, report.images);
    out += name + buf;
  };
  for (std::size_t n = 0; n < report.bleu.size(); ++n) line("BLEU-" + std::to_string(n + 1), report.bleu[n]);
  line("ROUGE-L", report.rouge_l);
  line("CIDEr", report.cider);
  return out;
}

}  // namespace simnet
