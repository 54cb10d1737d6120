#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xtm {

enum class Errc {
  // corpus_io
  IoError,
  EmptyFile,
  DuplicateToken,
  IndexOutOfVocab,
  BadLangTag,
  MalformedLine,
  DanglingPair,
  // embedding_store
  MalformedHeader,
  DimMismatch,
  NonFiniteVector,
  NoCoveredWords,
  MissingDocEmbedding,
  ProviderError,
  // backbone_vae
  NonFiniteActivation,
  NonFiniteLoss,
  BadConfig,
  BadCheckpoint,
  // llm_refiner
  EmptyBatch,
  MissingTopic,
  WordCountMismatch,
  MultiwordToken,
  OutOfOrderTopics,
  AllRetriesFailed,
  NoSuccessfulRounds,
  // mmd_align / qa_doc_align
  EmptySupport,
  DegenerateSupport,
  ShapeMismatch,
  NoTopicsEmbeddable,
  // eval_metrics
  EmptyReference,
  SingleClassTraining,
  UnparseableRating,
  // cli
  UsageError,
  NoLlmProvider,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::IoError: return "IoError";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::DuplicateToken: return "DuplicateToken";
    case Errc::IndexOutOfVocab: return "IndexOutOfVocab";
    case Errc::BadLangTag: return "BadLangTag";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::DanglingPair: return "DanglingPair";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NonFiniteVector: return "NonFiniteVector";
    case Errc::NoCoveredWords: return "NoCoveredWords";
    case Errc::MissingDocEmbedding: return "MissingDocEmbedding";
    case Errc::ProviderError: return "ProviderError";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::MissingTopic: return "MissingTopic";
    case Errc::WordCountMismatch: return "WordCountMismatch";
    case Errc::MultiwordToken: return "MultiwordToken";
    case Errc::OutOfOrderTopics: return "OutOfOrderTopics";
    case Errc::AllRetriesFailed: return "AllRetriesFailed";
    case Errc::NoSuccessfulRounds: return "NoSuccessfulRounds";
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::DegenerateSupport: return "DegenerateSupport";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NoTopicsEmbeddable: return "NoTopicsEmbeddable";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::SingleClassTraining: return "SingleClassTraining";
    case Errc::UnparseableRating: return "UnparseableRating";
    case Errc::UsageError: return "UsageError";
    case Errc::NoLlmProvider: return "NoLlmProvider";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the named codes above.
/// `detail()` holds the human-readable payload (token, line number, id, ...).
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace xtm
