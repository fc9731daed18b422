#include "facegen/text_pipeline.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/external_process.hpp"
#include "facegen/resources.hpp"
#include "facegen/rng.hpp"

namespace facegen {

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool has_vowel(std::string_view s) {
  for (char c : s) {
    if (is_vowel(c)) return true;
  }
  return false;
}

int vowel_groups(std::string_view s) {
  int groups = 0;
  bool in_group = false;
  for (char c : s) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  return groups;
}

// consonant-vowel-consonant ending where the final consonant is not w, x or y
bool ends_cvc(std::string_view s) {
  if (s.size() < 3) return false;
  const char c1 = s[s.size() - 3], v = s[s.size() - 2], c2 = s[s.size() - 1];
  return !is_vowel(c1) && is_vowel(v) && !is_vowel(c2) && c2 != 'w' && c2 != 'x' && c2 != 'y';
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

const TextNormalizer& TextNormalizer::shipped() {
  static const TextNormalizer normalizer =
      from_resources(resources::stopwords_txt(), resources::lemma_rules_json());
  return normalizer;
}

TextNormalizer TextNormalizer::from_resources(std::string_view stopwords_txt, std::string_view lemma_rules_json) {
  TextNormalizer n;
  std::istringstream lines{std::string(stopwords_txt)};
  std::string line;
  while (std::getline(lines, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    n.stopwords_.insert(line);
  }

  try {
    const auto j = nlohmann::json::parse(lemma_rules_json);
    n.irregular_ = j.at("irregular").get<std::map<std::string, std::string>>();
    for (const auto& r : j.at("suffix_rules")) {
      n.rules_.push_back(SuffixRule{r.at("suffix").get<std::string>(), r.at("replace").get<std::string>(),
                                    r.at("min_stem").get<std::size_t>(), r.at("restore_e").get<bool>()});
    }
    for (const auto& w : j.at("s_exceptions")) n.s_exceptions_.insert(w.get<std::string>());
    n.s_keep_endings_ = j.at("s_keep_endings").get<std::vector<std::string>>();
    n.ed_keep_endings_ = j.at("ed_keep_endings").get<std::vector<std::string>>();
    for (const auto& c : j.at("undouble_except")) n.undouble_except_ += c.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Configuration, std::string("lemma_rules.json: ") + e.what());
  }
  return n;
}

std::string TextNormalizer::apply_once(const std::string& word) const {
  if (auto it = irregular_.find(word); it != irregular_.end()) return it->second;

  for (const auto& rule : rules_) {
    if (!ends_with(word, rule.suffix)) continue;
    if (rule.suffix == "s") {
      if (s_exceptions_.contains(word)) continue;
      bool keep = false;
      for (const auto& e : s_keep_endings_) keep = keep || ends_with(word, e);
      if (keep) continue;
    }
    if (rule.suffix == "ed") {
      bool keep = false;
      for (const auto& e : ed_keep_endings_) keep = keep || ends_with(word, e);
      if (keep) continue;
    }
    std::string stem = word.substr(0, word.size() - rule.suffix.size()) + rule.replace;
    if (stem.size() < rule.min_stem || !has_vowel(stem)) continue;
    if (rule.restore_e) {
      const std::size_t n = stem.size();
      if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
          undouble_except_.find(stem[n - 1]) == std::string::npos) {
        stem.pop_back();
      } else if (ends_cvc(stem) && vowel_groups(stem) == 1) {
        stem += 'e';
      }
    }
    return stem;
  }
  return word;
}

std::string TextNormalizer::lemmatize(std::string_view word) const {
  std::string current(word);
  for (int i = 0; i < 8; ++i) {
    std::string next = apply_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

TokenSequence TextNormalizer::preprocess(std::string_view text) const {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned += (c < 0x80) ? static_cast<char>(std::tolower(c)) : ch;
  }

  TokenSequence tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    std::size_t j = i;
    while (j < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[j]))) ++j;
    if (j > i) {
      const std::string word = cleaned.substr(i, j - i);
      if (!is_stopword(word)) {
        std::string lemma = lemmatize(word);
        if (!lemma.empty() && !is_stopword(lemma)) tokens.push_back(std::move(lemma));
      }
    }
    i = j;
  }
  return tokens;
}

TokenSequence preprocess(std::string_view text) { return TextNormalizer::shipped().preprocess(text); }

std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<double> HashEmbedder::token_vector(std::string_view token) {
  SplitMix64 rng(fnv1a64(token));
  std::vector<double> v(kDimension);
  for (double& x : v) x = rng.normal();
  return v;
}

EmbeddingVector HashEmbedder::embed(const TokenSequence& tokens) const {
  if (tokens.empty()) fail(ErrorKind::EmptyDescription, "no tokens to embed");
  // Summing the multiset in sorted order makes the result bit-identical
  // under any reordering of the tokens.
  std::map<std::string_view, int> counts;
  for (const auto& t : tokens) ++counts[t];
  std::vector<double> sum(kDimension, 0.0);
  for (const auto& [token, count] : counts) {
    const auto v = token_vector(token);
    for (std::size_t i = 0; i < kDimension; ++i) sum[i] += static_cast<double>(count) * v[i];
  }
  double norm = 0.0;
  for (double x : sum) norm += x * x;
  norm = std::sqrt(norm);
  EmbeddingVector out;
  out.values.resize(kDimension);
  for (std::size_t i = 0; i < kDimension; ++i) out.values[i] = static_cast<float>(sum[i] / norm);
  return out;
}

ExternalEmbedder::ExternalEmbedder(std::string command, std::size_t dimension, std::string name)
    : command_(std::move(command)), dimension_(dimension), name_(std::move(name)) {}

EmbeddingVector ExternalEmbedder::embed(const TokenSequence& tokens) const {
  if (tokens.empty()) fail(ErrorKind::EmptyDescription, "no tokens to embed");
  const auto result = run_command(command_, join_tokens(tokens) + "\n");
  if (result.exit_code != 0) {
    fail(ErrorKind::BackendUnavailable, "encoder command exited with " + std::to_string(result.exit_code));
  }
  EmbeddingVector out;
  try {
    const auto line = result.stdout_text.substr(0, result.stdout_text.find('\n'));
    out.values = nlohmann::json::parse(line).get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::BackendUnavailable, std::string("encoder returned malformed JSON: ") + e.what());
  }
  if (out.values.size() != dimension_) {
    fail(ErrorKind::BackendUnavailable, "encoder returned " + std::to_string(out.values.size()) +
                                            " values, expected " + std::to_string(dimension_));
  }
  for (float v : out.values) {
    if (!std::isfinite(v)) fail(ErrorKind::BackendUnavailable, "encoder returned a non-finite value");
  }
  return out;
}

EmbeddingVector embed_text(std::string_view text, const Embedder& embedder) {
  const auto tokens = preprocess(text);
  if (tokens.empty()) fail(ErrorKind::EmptyDescription, "description has no content words");
  return embedder.embed(tokens);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderInfo& info, const std::string& external_command) {
  if (info.name == HashEmbedder{}.info().name) {
    if (info.dimension != HashEmbedder::kDimension) {
      fail(ErrorKind::Configuration, "hash embedder dimension must be 64");
    }
    return std::make_unique<HashEmbedder>();
  }
  if (external_command.empty()) {
    fail(ErrorKind::BackendUnavailable, "embedder '" + info.name + "' needs an external encoder command");
  }
  return std::make_unique<ExternalEmbedder>(external_command, info.dimension, info.name);
}

}  // namespace facegen
