#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"

namespace proxylm {

struct TokenSequence {
  std::vector<std::string> tokens;

  bool operator==(const TokenSequence&) const = default;
};

enum class TokenizeMode { unicode_words, pretokenized_whitespace };

namespace detail {

constexpr char32_t kReplacement = 0xFFFD;

inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Simple case mapping for Latin, Greek, Cyrillic and Armenian.
inline char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 0x20;
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return (c % 2 == 0) ? c + 1 : c;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 1) ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x531 && c <= 0x556) return c + 0x30;
  return c;
}

inline bool is_ideograph(char32_t c) {
  return (c >= 0x3040 && c <= 0x309F) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0xF900 && c <= 0xFAFF) ||
         (c >= 0x20000 && c <= 0x2FFFF);
}

// Word characters: letters, digits, combining marks and underscore. Non-ASCII
// code points count as word characters unless they fall in a punctuation,
// symbol, space or private-use block.
inline bool is_word_char(char32_t c) {
  if (c < 0x80) return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') ||
                       (c >= U'0' && c <= U'9') || c == U'_';
  if (c <= 0xBF) return c == 0xAA || c == 0xB5 || c == 0xBA;
  if (c == 0xD7 || c == 0xF7) return false;
  if (c >= 0x2000 && c <= 0x2BFF) return false;
  if (c >= 0x2E00 && c <= 0x2E7F) return false;
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c >= 0xE000 && c <= 0xF8FF) return false;
  if (c >= 0xFE10 && c <= 0xFE6F) return false;
  if ((c >= 0xFF00 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
      (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65))
    return false;
  if (c >= 0x1F000 && c <= 0x1FAFF) return false;
  if (c == kReplacement || c == 0xFEFF) return false;
  return true;
}

inline bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

inline bool is_alnum(char32_t c) { return is_word_char(c) && c != U'_'; }

// Characters that do not break a word when surrounded by word characters:
// apostrophes and full stops between letters or digits, colon and middle dot
// between letters, comma and semicolon between digits.
inline bool joins(char32_t mid, char32_t before, char32_t after) {
  if (!is_word_char(before) || !is_word_char(after)) return false;
  if (is_ideograph(before) || is_ideograph(after)) return false;
  const bool digits = is_digit(before) && is_digit(after);
  const bool letters = !is_digit(before) && !is_digit(after);
  switch (mid) {
    case U'\'':
    case U'.':
    case 0x2019:
      return digits || letters;
    case U':':
    case 0xB7:
      return letters;
    case U',':
    case U';':
      return digits;
    default:
      return false;
  }
}

}  // namespace detail

/// Splits text into tokens.
///
/// unicode_words lowercases, then cuts at word boundaries. A segment survives
/// only if it holds at least one letter or digit, so whitespace and punctuation
/// runs vanish. Ideographs form single-character words.
/// pretokenized_whitespace splits on ASCII whitespace and keeps tokens verbatim.
inline TokenSequence tokenize(std::string_view text, TokenizeMode mode) {
  TokenSequence out;
  if (mode == TokenizeMode::pretokenized_whitespace) {
    std::size_t i = 0;
    auto is_space = [](char c) {
      return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    };
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) out.tokens.emplace_back(text.substr(start, i - start));
    }
    return out;
  }

  auto cps = detail::decode_utf8(text);
  for (auto& c : cps) c = detail::to_lower(c);

  std::string current;
  bool has_alnum = false;
  auto flush = [&] {
    if (!current.empty() && has_alnum) out.tokens.push_back(current);
    current.clear();
    has_alnum = false;
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (detail::is_ideograph(c)) {
      flush();
      detail::append_utf8(current, c);
      has_alnum = true;
      flush();
      continue;
    }
    if (detail::is_word_char(c)) {
      detail::append_utf8(current, c);
      has_alnum = has_alnum || detail::is_alnum(c);
      continue;
    }
    if (!current.empty() && i + 1 < cps.size() && detail::joins(c, cps[i - 1], cps[i + 1])) {
      detail::append_utf8(current, c);
      continue;
    }
    flush();
  }
  flush();
  return out;
}

/// Token-level summary of one corpus.
struct DatasetProfile {
  std::string dataset_id;
  std::uint64_t num_sentences = 0;
  std::uint64_t total_tokens = 0;
  std::map<std::string, std::uint64_t> token_counts;
  std::uint64_t vocab_size = 0;
  double avg_sentence_length = 0.0;
  double ttr = 0.0;

  bool operator==(const DatasetProfile&) const = default;
};

inline DatasetProfile profile(std::string dataset_id, std::span<const TokenSequence> sentences) {
  if (sentences.empty())
    throw Error(ErrorCode::empty_corpus, "dataset '" + dataset_id + "' has no sentences");
  DatasetProfile p;
  p.dataset_id = std::move(dataset_id);
  p.num_sentences = sentences.size();
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      if (t.empty()) throw Error(ErrorCode::invalid_argument, "empty token");
      ++p.token_counts[t];
      ++p.total_tokens;
    }
  }
  if (p.total_tokens == 0)
    throw Error(ErrorCode::empty_corpus, "dataset '" + p.dataset_id + "' has no tokens");
  p.vocab_size = p.token_counts.size();
  p.avg_sentence_length =
      static_cast<double>(p.total_tokens) / static_cast<double>(p.num_sentences);
  p.ttr = static_cast<double>(p.vocab_size) / static_cast<double>(p.total_tokens);
  return p;
}

/// |T1 ∩ T2| / (|T1| + |T2|) over the two vocabularies.
inline double word_overlap(const DatasetProfile& a, const DatasetProfile& b) {
  std::uint64_t shared = 0;
  auto ia = a.token_counts.begin();
  auto ib = b.token_counts.begin();
  while (ia != a.token_counts.end() && ib != b.token_counts.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  const auto denom = a.token_counts.size() + b.token_counts.size();
  if (denom == 0) return 0.0;
  return static_cast<double>(shared) / static_cast<double>(denom);
}

/// (1 - ttr_train / ttr_test)^2. Argument order matters.
inline double ttr_distance(double ttr_train, double ttr_test) {
  auto valid = [](double t) { return std::isfinite(t) && t > 0.0 && t <= 1.0; };
  if (!valid(ttr_train) || !valid(ttr_test))
    throw Error(ErrorCode::invalid_ttr, "TTR values must lie in (0, 1]");
  const double r = 1.0 - ttr_train / ttr_test;
  return r * r;
}

/// Normalized token distribution. Tokens absent from the map have probability 0.
class TokenDistribution {
 public:
  static TokenDistribution from_probabilities(std::map<std::string, double> probs) {
    double sum = 0.0;
    for (const auto& [tok, p] : probs) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw Error(ErrorCode::invalid_argument, "negative or non-finite probability for '" + tok + "'");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorCode::invalid_argument, "probabilities do not sum to 1");
    TokenDistribution d;
    d.probs_ = std::move(probs);
    return d;
  }

  static TokenDistribution from_profile(const DatasetProfile& p) {
    TokenDistribution d;
    const auto total = static_cast<double>(p.total_tokens);
    for (const auto& [tok, count] : p.token_counts) d.probs_[tok] = static_cast<double>(count) / total;
    return d;
  }

  const std::map<std::string, double>& probs() const noexcept { return probs_; }

 private:
  std::map<std::string, double> probs_;
};

/// Base-2 Jensen-Shannon divergence, in [0, 1].
inline double jsd(const TokenDistribution& p, const TokenDistribution& q) {
  // Terms are accumulated in token order over the union; the per-token term is
  // symmetric in (p, q), which makes the result exactly symmetric.
  auto term = [](double a, double b) {
    const double m = 0.5 * (a + b);
    double t = 0.0;
    if (a > 0.0) t += a * std::log2(a / m);
    if (b > 0.0) t += b * std::log2(b / m);
    return 0.5 * t;
  };
  const auto& pp = p.probs();
  const auto& qq = q.probs();
  double sum = 0.0;
  auto ip = pp.begin();
  auto iq = qq.begin();
  while (ip != pp.end() || iq != qq.end()) {
    if (iq == qq.end() || (ip != pp.end() && ip->first < iq->first)) {
      sum += term(ip->second, 0.0);
      ++ip;
    } else if (ip == pp.end() || iq->first < ip->first) {
      sum += term(0.0, iq->second);
      ++iq;
    } else {
      const double a = ip->second, b = iq->second;
      sum += (a <= b) ? term(a, b) : term(b, a);
      ++ip;
      ++iq;
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// Cosine between the TF-IDF vectors of two corpora, each treated as a single
/// document of a two-document collection. tf is the raw count and
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1 with N = 2.
inline double tfidf_cosine(const DatasetProfile& a, const DatasetProfile& b) {
  constexpr double n_docs = 2.0;
  const double idf_one = std::log((1.0 + n_docs) / (1.0 + 1.0)) + 1.0;
  const double idf_both = std::log((1.0 + n_docs) / (1.0 + 2.0)) + 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  auto ia = a.token_counts.begin();
  auto ib = b.token_counts.begin();
  while (ia != a.token_counts.end() || ib != b.token_counts.end()) {
    if (ib == b.token_counts.end() || (ia != a.token_counts.end() && ia->first < ib->first)) {
      const double x = static_cast<double>(ia->second) * idf_one;
      na += x * x;
      ++ia;
    } else if (ia == a.token_counts.end() || ib->first < ia->first) {
      const double y = static_cast<double>(ib->second) * idf_one;
      nb += y * y;
      ++ib;
    } else {
      const double x = static_cast<double>(ia->second) * idf_both;
      const double y = static_cast<double>(ib->second) * idf_both;
      dot += x * y;
      na += x * x;
      nb += y * y;
      ++ia;
      ++ib;
    }
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "TF-IDF vector has zero norm");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct EmbeddingSet {
  std::string dataset_id;
  std::size_t dim = 0;
  std::vector<double> mean_vector;
};

inline double embedding_cosine(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim != b.dim || a.mean_vector.size() != a.dim || b.mean_vector.size() != b.dim)
    throw Error(ErrorCode::dim_mismatch, "embedding dimensions differ: " + std::to_string(a.dim) +
                                             " vs " + std::to_string(b.dim));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim; ++i) {
    dot += a.mean_vector[i] * b.mean_vector[i];
    na += a.mean_vector[i] * a.mean_vector[i];
    nb += b.mean_vector[i] * b.mean_vector[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "mean embedding is the zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Column order of the dataset feature block. Fixed; downstream CSVs rely on it.
inline constexpr std::array<std::string_view, 10> kDatasetFeatureNames = {
    "train_size", "vocab_size_train", "avg_sentence_length_train", "word_overlap", "ttr_train",
    "ttr_test",   "ttr_distance",     "jsd",                       "tfidf_cosine", "embedding_cosine"};

struct DatasetFeatureBlock {
  double train_size = 0;
  double vocab_size_train = 0;
  double avg_sentence_length_train = 0;
  double word_overlap = 0;
  double ttr_train = 0;
  double ttr_test = 0;
  double ttr_distance = 0;
  double jsd = 0;
  double tfidf_cosine = 0;
  std::optional<double> embedding_cosine;

  /// Values in kDatasetFeatureNames order; missing embedding cosine stays empty.
  std::array<std::optional<double>, 10> values() const {
    return {train_size, vocab_size_train, avg_sentence_length_train, word_overlap, ttr_train,
            ttr_test,   ttr_distance,     jsd,                       tfidf_cosine, embedding_cosine};
  }

  bool operator==(const DatasetFeatureBlock&) const = default;
};

inline DatasetFeatureBlock dataset_features(
    const DatasetProfile& train, const DatasetProfile& test,
    const std::optional<std::pair<EmbeddingSet, EmbeddingSet>>& embeddings = std::nullopt) {
  DatasetFeatureBlock f;
  f.train_size = static_cast<double>(train.num_sentences);
  f.vocab_size_train = static_cast<double>(train.vocab_size);
  f.avg_sentence_length_train = train.avg_sentence_length;
  f.word_overlap = word_overlap(train, test);
  f.ttr_train = train.ttr;
  f.ttr_test = test.ttr;
  f.ttr_distance = ttr_distance(train.ttr, test.ttr);
  f.jsd = jsd(TokenDistribution::from_profile(train), TokenDistribution::from_profile(test));
  f.tfidf_cosine = tfidf_cosine(train, test);
  if (embeddings) f.embedding_cosine = embedding_cosine(embeddings->first, embeddings->second);
  return f;
}

// ---------------------------------------------------------------------------
// File formats

/// One sentence per line, UTF-8.
inline std::vector<TokenSequence> load_corpus(const std::string& path, TokenizeMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open corpus", path);
  std::vector<TokenSequence> sentences;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    sentences.push_back(tokenize(line, mode));
  }
  return sentences;
}

/// JSON lines: {"dataset_id": "...", "dim": n, "mean_vector": [...]}.
inline std::map<std::string, EmbeddingSet> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open embeddings", path);
  std::map<std::string, EmbeddingSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    EmbeddingSet e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.dataset_id = j.at("dataset_id").get<std::string>();
      e.dim = j.at("dim").get<std::size_t>();
      e.mean_vector = j.at("mean_vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse_error, ex.what(), path, line_no);
    }
    if (e.dim < 1 || e.mean_vector.size() != e.dim)
      throw Error(ErrorCode::dim_mismatch, "mean_vector length does not match dim", path, line_no);
    for (double v : e.mean_vector)
      if (!std::isfinite(v)) throw Error(ErrorCode::range_error, "non-finite embedding value", path, line_no);
    if (out.contains(e.dataset_id))
      throw Error(ErrorCode::duplicate_id, "duplicate dataset_id '" + e.dataset_id + "'", path, line_no);
    out.emplace(e.dataset_id, std::move(e));
  }
  return out;
}

/// Feature table keyed by (train_dataset, test_dataset).
using DatasetFeatureMap = std::map<std::pair<std::string, std::string>, DatasetFeatureBlock>;

/// CSV with columns train_dataset,test_dataset followed by kDatasetFeatureNames.
/// Missing values are empty cells.
inline std::string format_feature_csv(const DatasetFeatureMap& features) {
  std::vector<std::string> header = {"train_dataset", "test_dataset"};
  for (auto n : kDatasetFeatureNames) header.emplace_back(n);
  std::string out = csv::join(header) + "\n";
  for (const auto& [key, block] : features) {
    std::vector<std::string> row = {key.first, key.second};
    for (const auto& v : block.values()) row.push_back(v ? csv::format_exact(*v) : std::string());
    out += csv::join(row) + "\n";
  }
  return out;
}

inline DatasetFeatureMap load_feature_csv(const std::string& path) {
  const auto table = csv::read_file(path);
  std::vector<std::size_t> cols;
  for (std::string_view name : {std::string_view("train_dataset"), std::string_view("test_dataset")}) {
    auto c = table.column(name);
    if (!c) throw Error(ErrorCode::parse_error, "missing column '" + std::string(name) + "'", path, 1);
    cols.push_back(*c);
  }
  for (auto name : kDatasetFeatureNames) {
    auto c = table.column(name);
    if (!c) throw Error(ErrorCode::parse_error, "missing column '" + std::string(name) + "'", path, 1);
    cols.push_back(*c);
  }
  DatasetFeatureMap out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    std::array<std::optional<double>, 10> v;
    for (std::size_t k = 0; k < 10; ++k) {
      const auto& cell = row[cols[k + 2]];
      if (csv::trim(cell).empty()) {
        if (k != 9)
          throw Error(ErrorCode::parse_error, "empty value for '" + std::string(kDatasetFeatureNames[k]) + "'",
                      path, line);
        continue;
      }
      v[k] = csv::parse_double(cell);
      if (!v[k] || !std::isfinite(*v[k]))
        throw Error(ErrorCode::parse_error, "bad number '" + cell + "'", path, line);
    }
    DatasetFeatureBlock b;
    b.train_size = *v[0];
    b.vocab_size_train = *v[1];
    b.avg_sentence_length_train = *v[2];
    b.word_overlap = *v[3];
    b.ttr_train = *v[4];
    b.ttr_test = *v[5];
    b.ttr_distance = *v[6];
    b.jsd = *v[7];
    b.tfidf_cosine = *v[8];
    b.embedding_cosine = v[9];
    auto key = std::make_pair(std::string(csv::trim(row[cols[0]])), std::string(csv::trim(row[cols[1]])));
    if (!out.emplace(std::move(key), b).second)
      throw Error(ErrorCode::duplicate_id, "duplicate dataset pair", path, line);
  }
  return out;
}

}  // namespace proxylm
