#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "facegen/types.hpp"

namespace facegen {

using TokenSequence = std::vector<std::string>;

struct SuffixRule {
  std::string suffix;
  std::string replace;
  std::size_t min_stem = 3;
  bool restore_e = false;
};

/// Stopword removal plus the rule-based lemmatizer. Built from the shipped
/// stopwords.txt and lemma_rules.json; immutable after construction.
class TextNormalizer {
 public:
  static const TextNormalizer& shipped();
  static TextNormalizer from_resources(std::string_view stopwords_txt, std::string_view lemma_rules_json);

  /// Lowercase, strip ASCII punctuation, split on whitespace, drop stopwords,
  /// lemmatize, drop lemmas that are stopwords. Idempotent.
  TokenSequence preprocess(std::string_view text) const;

  /// Applies the irregular table and suffix rules until a fixed point.
  std::string lemmatize(std::string_view word) const;

  bool is_stopword(std::string_view word) const { return stopwords_.contains(std::string(word)); }
  const std::set<std::string>& stopwords() const { return stopwords_; }

 private:
  std::string apply_once(const std::string& word) const;

  std::set<std::string> stopwords_;
  std::map<std::string, std::string> irregular_;
  std::vector<SuffixRule> rules_;
  std::set<std::string> s_exceptions_;
  std::vector<std::string> s_keep_endings_;
  std::vector<std::string> ed_keep_endings_;
  std::string undouble_except_;
};

TokenSequence preprocess(std::string_view text);

std::string join_tokens(const TokenSequence& tokens);

struct EmbedderInfo {
  std::string name;
  std::size_t dimension = 0;
  bool deterministic = true;

  friend bool operator==(const EmbedderInfo&, const EmbedderInfo&) = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbedderInfo info() const = 0;
  /// Throws EmptyDescription on an empty sequence.
  virtual EmbeddingVector embed(const TokenSequence& tokens) const = 0;
};

/// Offline fallback: bag of hashed words. Each distinct token's FNV-1a hash
/// seeds a SplitMix64 stream of 64 standard normals; the sentence vector is
/// the L2-normalized sum over tokens (with multiplicity).
class HashEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDimension = 64;

  EmbedderInfo info() const override { return {"hash-bow-64", kDimension, true}; }
  EmbeddingVector embed(const TokenSequence& tokens) const override;

  static std::vector<double> token_vector(std::string_view token);
};

/// Out-of-process sentence encoder. Protocol: one UTF-8 line of text on
/// stdin, one JSON array of `dimension` numbers per line on stdout.
class ExternalEmbedder final : public Embedder {
 public:
  ExternalEmbedder(std::string command, std::size_t dimension = 768, std::string name = "external-sentence-encoder");

  EmbedderInfo info() const override { return {name_, dimension_, true}; }
  EmbeddingVector embed(const TokenSequence& tokens) const override;

 private:
  std::string command_;
  std::size_t dimension_;
  std::string name_;
};

/// embed(preprocess(text)); EmptyDescription when nothing survives.
EmbeddingVector embed_text(std::string_view text, const Embedder& embedder);

/// Constructs the embedder recorded in a model header.
std::unique_ptr<Embedder> make_embedder(const EmbedderInfo& info, const std::string& external_command = {});

}  // namespace facegen
