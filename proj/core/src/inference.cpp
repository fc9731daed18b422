#include "facegen/inference.hpp"

#include <cmath>

#include "facegen/errors.hpp"
#include "facegen/rng.hpp"

namespace facegen {

void VariantRequest::validate() const {
  if (k < 1 || k > kMaxVariants) fail(ErrorKind::InvalidRequest, "k must lie in 1..32, got " + std::to_string(k));
  if (!std::isfinite(sigma) || sigma < 0.0) fail(ErrorKind::InvalidRequest, "sigma must be finite and non-negative");
}

std::vector<LatentVector> variant_latents(const LatentVector& base, const VariantRequest& request) {
  request.validate();
  if (!base.is_finite()) fail(ErrorKind::InvalidLatent, "base latent has non-finite elements");
  std::vector<LatentVector> out(request.k, base);
  if (request.sigma == 0.0) return out;
  SplitMix64 rng(request.noise_seed);
  for (auto& z : out) {
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      z[j] = static_cast<float>(static_cast<double>(base[j]) + request.sigma * rng.normal());
    }
    if (!z.is_finite()) fail(ErrorKind::InvalidRequest, "sigma too large: variant left the float range");
  }
  return out;
}

Pipeline::Pipeline(std::shared_ptr<const RegressorModel> model, std::shared_ptr<const Embedder> embedder,
                   std::shared_ptr<const Generator> generator, const Lexicon& lexicon)
    : model_(std::move(model)), embedder_(std::move(embedder)), generator_(std::move(generator)), lexicon_(lexicon) {
  if (!embedder_ || !generator_) fail(ErrorKind::Configuration, "pipeline needs an embedder and a generator");
  if (generator_->latent_dim() != kLatentDim) fail(ErrorKind::Configuration, "generator latent size is not 512");
  if (model_ && model_->config.input_dim != embedder_->info().dimension) {
    fail(ErrorKind::Configuration, "model input_dim does not match the embedder dimension");
  }
}

const RegressorModel& Pipeline::model() const {
  if (!model_) fail(ErrorKind::ModelNotLoaded, "no regressor model is loaded");
  return *model_;
}

LatentVector Pipeline::latent_for_text(std::string_view text) const {
  const auto& m = model();
  return forward(m, embed_text(text, *embedder_));
}

GenerationResult Pipeline::generate_from_text(std::string_view text) const {
  return render(latent_for_text(text), text);
}

GenerationResult Pipeline::render(const LatentVector& z, std::string_view text) const {
  GenerationResult r;
  r.latent = z;
  r.latent_id = latent_id(z);
  r.image = generator_->generate(z);
  r.attributes = generator_->attributes(z);
  if (r.attributes && !preprocess(text).empty()) {
    const auto constraints = lexicon_.parse(text);
    if (!constraints.empty()) r.match = match_score(constraints, *r.attributes);
  }
  return r;
}

std::vector<GenerationResult> Pipeline::variants(const LatentVector& base, const VariantRequest& request,
                                                 std::string_view text) const {
  std::vector<GenerationResult> out;
  for (const auto& z : variant_latents(base, request)) out.push_back(render(z, text));
  return out;
}

}  // namespace facegen
