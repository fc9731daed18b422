#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facegen/descriptor.hpp"
#include "facegen/generator.hpp"
#include "facegen/regressor.hpp"
#include "facegen/text_pipeline.hpp"

namespace facegen {

struct GenerationResult {
  LatentVector latent;
  FaceImage image;
  std::optional<FaceAttributes> attributes;  // backends with a semantic decoding only
  std::optional<double> match;               // needs attributes and a text that mentions a channel
  std::string latent_id;
};

inline constexpr std::size_t kMaxVariants = 32;

struct VariantRequest {
  std::size_t k = 8;
  double sigma = 0.1;
  std::uint64_t noise_seed = 0;

  /// InvalidRequest unless 1 <= k <= 32 and sigma is finite and >= 0.
  void validate() const;

  friend bool operator==(const VariantRequest&, const VariantRequest&) = default;
};

/// z_i = base + sigma * eps_i where eps_i is the i-th block of 512 normals
/// from SplitMix64(noise_seed). sigma = 0 returns exact copies of base.
std::vector<LatentVector> variant_latents(const LatentVector& base, const VariantRequest& request);

/// The frozen stacked pipeline text -> embedding -> latent -> image. All
/// members are immutable after construction, so one instance serves any
/// number of concurrent callers.
class Pipeline {
 public:
  Pipeline(std::shared_ptr<const RegressorModel> model, std::shared_ptr<const Embedder> embedder,
           std::shared_ptr<const Generator> generator, const Lexicon& lexicon = Lexicon::shipped());

  bool has_model() const { return model_ != nullptr; }
  const RegressorModel& model() const;  // ModelNotLoaded when absent
  const Embedder& embedder() const { return *embedder_; }
  const Generator& generator() const { return *generator_; }
  const Lexicon& lexicon() const { return lexicon_; }

  /// forward(model, embed_text(text)). EmptyDescription, ModelNotLoaded.
  LatentVector latent_for_text(std::string_view text) const;

  GenerationResult generate_from_text(std::string_view text) const;

  /// Renders z; `text` (may be empty) only feeds the match score.
  GenerationResult render(const LatentVector& z, std::string_view text = {}) const;

  std::vector<GenerationResult> variants(const LatentVector& base, const VariantRequest& request,
                                         std::string_view text = {}) const;

 private:
  std::shared_ptr<const RegressorModel> model_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Generator> generator_;
  const Lexicon& lexicon_;
};

}  // namespace facegen
