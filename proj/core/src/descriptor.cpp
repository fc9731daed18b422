#include "facegen/descriptor.hpp"

#include <algorithm>

#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/external_process.hpp"
#include "facegen/image_codec.hpp"
#include "facegen/persistence.hpp"
#include "facegen/resources.hpp"
#include "facegen/rng.hpp"

namespace facegen {

using nlohmann::json;

void AttributeConstraints::set(int channel, int level) {
  if (channel < 0 || channel >= static_cast<int>(kAttributeCount) || level < 0 || level >= level_count(channel)) {
    fail(ErrorKind::Configuration, "constraint out of range");
  }
  levels_[static_cast<std::size_t>(channel)] = level;
}

std::size_t AttributeConstraints::size() const {
  return static_cast<std::size_t>(std::count_if(levels_.begin(), levels_.end(), [](const auto& l) { return l.has_value(); }));
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int require_channel(const std::string& name) {
  const auto c = channel_index(name);
  if (!c) fail(ErrorKind::Configuration, "lexicon.json: unknown channel '" + name + "'");
  return *c;
}

int require_level(int channel, const std::string& name) {
  const auto l = level_index(channel, name);
  if (!l) fail(ErrorKind::Configuration, "lexicon.json: unknown level '" + name + "'");
  return *l;
}

std::string collapse_spaces(const std::string& s) { return join_tokens(split_words(s)); }

}  // namespace

const Lexicon& Lexicon::shipped() {
  static const Lexicon lexicon = from_json(resources::lexicon_json());
  return lexicon;
}

Lexicon Lexicon::from_json(std::string_view text) {
  Lexicon lex;
  lex.source_ = std::string(text);
  const auto& normalizer = TextNormalizer::shipped();
  try {
    const json j = json::parse(text);

    const auto& channels = j.at("channels");
    if (channels.size() != kAttributeCount) fail(ErrorKind::Configuration, "lexicon.json: channel count mismatch");
    for (std::size_t c = 0; c < kAttributeCount; ++c) {
      const auto levels = channels[c].at("levels").get<std::vector<std::string>>();
      bool same = channels[c].at("name").get<std::string>() == channel_name(static_cast<int>(c)) &&
                  levels.size() == static_cast<std::size_t>(level_count(static_cast<int>(c)));
      for (std::size_t l = 0; same && l < levels.size(); ++l) same = levels[l] == level_name(static_cast<int>(c), static_cast<int>(l));
      if (!same) fail(ErrorKind::Configuration, "lexicon.json: schema differs at channel " + std::to_string(c));
    }

    std::set<std::string> seen;
    std::array<std::vector<bool>, kAttributeCount> covered;
    for (std::size_t c = 0; c < kAttributeCount; ++c) covered[c].assign(static_cast<std::size_t>(level_count(static_cast<int>(c))), false);

    for (const auto& e : j.at("entries")) {
      const auto phrase = e.at("phrase").get<std::string>();
      LexiconEntry entry;
      entry.tokens = split_words(phrase);
      if (normalizer.preprocess(phrase) != entry.tokens) {
        fail(ErrorKind::Configuration, "lexicon.json: phrase '" + phrase + "' is not in normalized form");
      }
      if (!seen.insert(phrase).second) fail(ErrorKind::Configuration, "lexicon.json: duplicate phrase '" + phrase + "'");
      for (const auto& [ch, lv] : e.at("targets").items()) {
        const int c = require_channel(ch);
        const int l = require_level(c, lv.get<std::string>());
        entry.targets.emplace_back(c, l);
        covered[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] = true;
      }
      lex.max_phrase_tokens_ = std::max(lex.max_phrase_tokens_, entry.tokens.size());
      lex.entries_.push_back(std::move(entry));
    }
    for (std::size_t c = 0; c < kAttributeCount; ++c) {
      for (std::size_t l = 0; l < covered[c].size(); ++l) {
        if (!covered[c][l]) {
          fail(ErrorKind::Configuration, "lexicon.json: no surface form for " + std::string(channel_name(static_cast<int>(c))) +
                                             "=" + std::string(level_name(static_cast<int>(c), static_cast<int>(l))));
        }
      }
    }

    const auto& gen = j.at("generation");
    lex.subjects_ = gen.at("subjects").get<std::map<std::string, std::string>>();
    for (int g = 0; g < 2; ++g) {
      const std::string gname(level_name(index(Channel::Gender), g));
      lex.pronouns_[static_cast<std::size_t>(g)] = gen.at("pronouns").at(gname).get<std::string>();
      lex.possessives_[static_cast<std::size_t>(g)] = gen.at("possessives").at(gname).get<std::string>();
      for (int a = 0; a < level_count(index(Channel::Age)); ++a) {
        const auto key = gname + "/" + std::string(level_name(index(Channel::Age), a));
        if (!lex.subjects_.contains(key)) fail(ErrorKind::Configuration, "lexicon.json: missing subject " + key);
      }
    }
    for (const auto& [ch, levels] : gen.at("levels").items()) {
      const int c = require_channel(ch);
      auto& phrases = lex.level_phrases_[static_cast<std::size_t>(c)];
      phrases.resize(static_cast<std::size_t>(level_count(c)));
      for (int l = 0; l < level_count(c); ++l) {
        phrases[static_cast<std::size_t>(l)] = levels.at(std::string(level_name(c, l))).get<std::string>();
      }
    }
    for (const auto& ch : gen.at("optional_channels")) lex.optional_channels_.push_back(require_channel(ch.get<std::string>()));

    for (const auto& t : gen.at("templates")) {
      DescriptionTemplate tmpl;
      tmpl.id = t.at("id").get<int>();
      for (const auto& s : t.at("segments")) {
        TemplateSegment seg;
        seg.text = s.at("text").get<std::string>();
        if (s.contains("channel")) seg.channel = require_channel(s.at("channel").get<std::string>());
        tmpl.segments.push_back(std::move(seg));
      }
      lex.templates_.push_back(std::move(tmpl));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Configuration, std::string("lexicon.json: ") + e.what());
  }
  if (lex.templates_.size() < 3) fail(ErrorKind::Configuration, "lexicon.json: at least 3 templates required");
  for (int c : {index(Channel::HairLength), index(Channel::HairColor), index(Channel::EyeSize), index(Channel::Expression)}) {
    if (lex.level_phrases_[static_cast<std::size_t>(c)].empty()) fail(ErrorKind::Configuration, "lexicon.json: missing level phrases");
  }
  for (int c : lex.optional_channels_) {
    if (lex.level_phrases_[static_cast<std::size_t>(c)].empty()) fail(ErrorKind::Configuration, "lexicon.json: missing level phrases");
  }
  return lex;
}

std::set<std::string> Lexicon::vocabulary() const {
  std::set<std::string> words;
  for (const auto& e : entries_) words.insert(e.tokens.begin(), e.tokens.end());
  return words;
}

AttributeConstraints Lexicon::parse(std::string_view text) const {
  const auto tokens = TextNormalizer::shipped().preprocess(text);
  if (tokens.empty()) fail(ErrorKind::EmptyDescription, "description has no content words");

  AttributeConstraints out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const LexiconEntry* best = nullptr;
    for (const auto& e : entries_) {
      const std::size_t n = e.tokens.size();
      if (i + n > tokens.size() || (best != nullptr && n <= best->tokens.size())) continue;
      if (std::equal(e.tokens.begin(), e.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) best = &e;
    }
    if (best == nullptr) {
      ++i;
      continue;
    }
    // later mentions override earlier ones
    for (const auto& [c, l] : best->targets) out.set(c, l);
    i += best->tokens.size();
  }
  return out;
}

std::string Lexicon::describe(const FaceAttributes& attrs, std::uint64_t variation_seed) const {
  SplitMix64 rng(variation_seed);
  const auto& tmpl = templates_[static_cast<std::size_t>(rng.below(templates_.size()))];
  std::array<bool, kAttributeCount> mentioned{};
  for (int c : optional_channels_) mentioned[static_cast<std::size_t>(c)] = rng.uniform() < 0.5;

  const int gender = attrs.level(Channel::Gender);
  const std::string subject_key =
      std::string(level_name(index(Channel::Gender), gender)) + "/" + std::string(level_name(index(Channel::Age), attrs.level(Channel::Age)));

  std::vector<std::pair<std::string, std::string>> slots;
  slots.emplace_back("{subject}", subjects_.at(subject_key));
  for (std::size_t c = 0; c < kAttributeCount; ++c) {
    if (level_phrases_[c].empty()) continue;
    slots.emplace_back("{" + std::string(channel_name(static_cast<int>(c))) + "}",
                       level_phrases_[c][static_cast<std::size_t>(attrs.levels[c])]);
  }
  const std::vector<std::pair<std::string, std::string>> pronouns = {
      {"{pronoun}", pronouns_[static_cast<std::size_t>(gender)]},
      {"{possessive}", possessives_[static_cast<std::size_t>(gender)]}};

  std::string text;
  for (const auto& seg : tmpl.segments) {
    if (seg.channel && !mentioned[static_cast<std::size_t>(*seg.channel)]) continue;
    text += substitute(substitute(seg.text, slots), pronouns);
    text += ' ';
  }
  return collapse_spaces(text);
}

std::string describe(const FaceAttributes& attrs, std::uint64_t variation_seed) {
  return Lexicon::shipped().describe(attrs, variation_seed);
}

AttributeConstraints parse_description(std::string_view text) { return Lexicon::shipped().parse(text); }

double match_score(const AttributeConstraints& constraints, const FaceAttributes& attrs) {
  if (constraints.empty()) fail(ErrorKind::UndefinedScore, "no constrained channels");
  std::size_t hits = 0;
  for (std::size_t c = 0; c < kAttributeCount; ++c) {
    const auto want = constraints.get(static_cast<int>(c));
    if (want && *want == attrs.levels[c]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(constraints.size());
}

double chance_baseline_exact() {
  double sum = 0.0;
  for (std::size_t c = 0; c < kAttributeCount; ++c) sum += 1.0 / level_count(static_cast<int>(c));
  return sum / static_cast<double>(kAttributeCount);
}

double chance_baseline_monte_carlo(const ProjectionMatrix& proj, std::size_t trials, std::uint64_t seed) {
  SplitMix64 rng(seed);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    LatentVector z;
    for (std::size_t i = 0; i < kLatentDim; ++i) z[i] = static_cast<float>(rng.normal());
    const auto attrs = latent_to_attributes(z, proj);
    AttributeConstraints cons;
    for (std::size_t c = 0; c < kAttributeCount; ++c) {
      cons.set(static_cast<int>(c), static_cast<int>(rng.below(static_cast<std::uint64_t>(level_count(static_cast<int>(c))))));
    }
    total += match_score(cons, attrs);
  }
  return total / static_cast<double>(trials);
}

std::string ExternalCaptioner::caption(const FaceImage& image) const {
  ScratchDirectory scratch("facegen-cap");
  const auto path = scratch.path() / "face.png";
  write_file_bytes(path, encode_png(image));
  const auto result = run_command(substitute(command_, {{"{image}", path.string()}}), "");
  if (result.exit_code != 0) fail(ErrorKind::BackendUnavailable, "captioner command failed");
  auto line = result.stdout_text.substr(0, result.stdout_text.find('\n'));
  if (line.empty()) fail(ErrorKind::BackendUnavailable, "captioner returned an empty caption");
  return line;
}

}  // namespace facegen
