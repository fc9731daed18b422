#include "facegen/errors.hpp"

namespace facegen {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Persistence: return "persistence-error";
    case ErrorKind::CorruptDataset: return "corrupt-dataset";
    case ErrorKind::InvalidLatent: return "invalid-latent";
    case ErrorKind::CorruptModel: return "corrupt-model";
    case ErrorKind::Version: return "version-error";
    case ErrorKind::Configuration: return "configuration-error";
    case ErrorKind::Shape: return "shape-error";
    case ErrorKind::EmptyBatch: return "empty-batch";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::EmptyDescription: return "empty-description";
    case ErrorKind::UndefinedScore: return "undefined-score";
    case ErrorKind::InvalidSplit: return "invalid-split";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::BackendUnavailable: return "backend-unavailable";
    case ErrorKind::InvalidRequest: return "invalid-request";
    case ErrorKind::SessionClosed: return "session-closed";
    case ErrorKind::InvalidSelection: return "invalid-selection";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::ModelNotLoaded: return "model-not-loaded";
  }
  return "unknown-error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace facegen
