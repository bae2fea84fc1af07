#include "kar/sparse.hpp"

#include <cmath>
#include <map>

#include "kar/errors.hpp"
#include "kar/text.hpp"

namespace kar {

Bm25Index Bm25Index::build(const KnowledgeBase& kb, Bm25Params params) {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  ids.reserve(kb.size());
  texts.reserve(kb.size());
  for (const auto& d : kb.documents()) {
    ids.push_back(d.doc_id);
    texts.push_back(d.text);
  }
  return build(std::move(ids), texts, params);
}

Bm25Index Bm25Index::build(std::vector<std::string> ids, std::span<const std::string> texts, Bm25Params params) {
  if (ids.empty()) throw InvalidArgument("cannot build a BM25 index over an empty corpus");
  if (ids.size() != texts.size()) throw InvalidArgument("ids and texts differ in length");
  if (params.k1 < 0.0 || params.b < 0.0 || params.b > 1.0) throw InvalidArgument("invalid BM25 parameters");

  Bm25Index index;
  index.params_ = params;
  index.ids_ = std::move(ids);
  index.id_ranks_ = lexicographic_ranks(index.ids_);
  index.doc_lengths_.reserve(texts.size());

  double total = 0.0;
  for (std::size_t d = 0; d < texts.size(); ++d) {
    std::map<std::string, std::uint32_t> tf;
    const auto tokens = tokenize(texts[d]);
    for (const auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf) index.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total += static_cast<double>(tokens.size());
  }
  index.avg_doc_length_ = total / static_cast<double>(texts.size());
  return index;
}

std::size_t Bm25Index::document_frequency(std::string_view term) const { return postings(term).size(); }

std::span<const Bm25Index::Posting> Bm25Index::postings(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  if (it == postings_.end()) return {};
  return it->second;
}

double Bm25Index::idf(std::string_view term) const {
  const double n = static_cast<double>(ids_.size());
  const double df = static_cast<double>(document_frequency(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Index::scores(std::string_view query) const {
  std::vector<double> out(ids_.size(), 0.0);
  const double k1 = params_.k1;
  const double b = params_.b;
  for (const auto& term : tokenize(query)) {
    const auto list = postings(term);
    if (list.empty()) continue;
    const double w = idf(term);
    for (const auto& p : list) {
      const double tf = p.tf;
      // avgdl is 0 only when every document tokenizes to nothing; no postings exist then.
      const double norm = 1.0 - b + b * static_cast<double>(doc_lengths_[p.doc]) / avg_doc_length_;
      out[p.doc] += w * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
  }
  return out;
}

std::vector<ScoredDoc> Bm25Index::top_k(std::string_view query, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  const auto all = scores(query);
  return rank_top_k(all, ids_, id_ranks_, k);
}

}  // namespace kar
