#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "facegen/generator.hpp"
#include "facegen/text_pipeline.hpp"

namespace facegen {

/// Partial channel -> level map holding only the channels a text mentions.
class AttributeConstraints {
 public:
  void set(int channel, int level);
  std::optional<int> get(int channel) const { return levels_[static_cast<std::size_t>(channel)]; }
  bool mentions(int channel) const { return get(channel).has_value(); }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  friend bool operator==(const AttributeConstraints&, const AttributeConstraints&) = default;

 private:
  std::array<std::optional<int>, kAttributeCount> levels_{};
};

struct LexiconEntry {
  std::vector<std::string> tokens;  // normalized phrase
  std::vector<std::pair<int, int>> targets;  // (channel, level); empty = recognised, no channel
};

struct TemplateSegment {
  std::string text;
  std::optional<int> channel;  // present: emitted only if the channel is mentioned
};

struct DescriptionTemplate {
  int id = 0;
  std::vector<TemplateSegment> segments;
};

/// Bidirectional vocabulary between attribute levels and surface words plus
/// the caption templates. Loaded from lexicon.json and validated on load:
/// phrases must already be in normalized (lemma) form, be unique, and every
/// (channel, level) must have at least one surface form.
class Lexicon {
 public:
  static const Lexicon& shipped();
  static Lexicon from_json(std::string_view text);

  AttributeConstraints parse(std::string_view text) const;
  std::string describe(const FaceAttributes& attrs, std::uint64_t variation_seed) const;

  const std::vector<LexiconEntry>& entries() const { return entries_; }
  const std::vector<DescriptionTemplate>& templates() const { return templates_; }
  /// Every token appearing in some lexicon phrase.
  std::set<std::string> vocabulary() const;
  /// The resource text as loaded, served to UI clients.
  const std::string& source_json() const { return source_; }

 private:
  std::string source_;
  std::vector<LexiconEntry> entries_;
  std::size_t max_phrase_tokens_ = 1;
  std::vector<DescriptionTemplate> templates_;
  std::map<std::string, std::string> subjects_;  // "gender/age" level names -> phrase
  std::array<std::string, 2> pronouns_;
  std::array<std::string, 2> possessives_;
  std::array<std::vector<std::string>, kAttributeCount> level_phrases_;
  std::vector<int> optional_channels_;
};

/// Seeded template caption. Always mentions gender, age, hair length and
/// colour, eye size and expression; each optional channel (beard, eyewear,
/// face shape, lips) is mentioned with probability 1/2.
std::string describe(const FaceAttributes& attrs, std::uint64_t variation_seed);

/// Throws EmptyDescription when nothing survives normalization.
AttributeConstraints parse_description(std::string_view text);

/// Fraction of constrained channels whose level equals attrs'. Throws
/// UndefinedScore on empty constraints.
double match_score(const AttributeConstraints& constraints, const FaceAttributes& attrs);

/// Exact expected match_score of a random latent against uniformly random
/// constraints on every channel: mean over channels of 1/L.
double chance_baseline_exact();

/// Monte-Carlo estimate of the same quantity: random standard-normal
/// latents decoded through `proj`, scored against random full constraints.
double chance_baseline_monte_carlo(const ProjectionMatrix& proj, std::size_t trials, std::uint64_t seed);

/// Image captioning backend contract (image in, caption out).
class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(const FaceImage& image) const = 0;
};

/// Runs a configured command with `{image}` replaced by a PNG path; the
/// command's first stdout line is the caption.
class ExternalCaptioner final : public Captioner {
 public:
  explicit ExternalCaptioner(std::string command_template) : command_(std::move(command_template)) {}
  std::string caption(const FaceImage& image) const override;

 private:
  std::string command_;
};

}  // namespace facegen
