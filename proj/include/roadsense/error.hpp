#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roadsense {

enum class ErrorCode {
  // graph data model and file formats
  MissingFile,
  ParseError,
  DuplicateNodeId,
  DanglingEdgeEndpoint,
  DuplicateEdge,
  InvalidGraph,
  EmptyGraph,
  IoError,
  InvalidConfig,
  InvalidFraction,
  TooFewUnlabeled,
  // numeric core
  ShapeMismatch,
  NonFiniteValue,
  NotScalarLoss,
  DetachedTensor,
  // model
  EmptyPooledGraph,
  EmptyTrainSet,
  NonFiniteLoss,
  // agent
  EmptyCandidateSet,
  WrongPolicyKind,
  InvalidAction,
  BudgetExhausted,
  EmptyBuffer,
  BudgetTooLarge,
  // baselines
  MissingActivityVector,
  DegenerateDesignMatrix,
  // harness
  LengthMismatch,
  AllExcludedFromMAPE,
  GraphMismatch,
  UnknownSubcommand,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateNodeId: return "DuplicateNodeId";
    case ErrorCode::DanglingEdgeEndpoint: return "DanglingEdgeEndpoint";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::TooFewUnlabeled: return "TooFewUnlabeled";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::DetachedTensor: return "DetachedTensor";
    case ErrorCode::EmptyPooledGraph: return "EmptyPooledGraph";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::WrongPolicyKind: return "WrongPolicyKind";
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::BudgetTooLarge: return "BudgetTooLarge";
    case ErrorCode::MissingActivityVector: return "MissingActivityVector";
    case ErrorCode::DegenerateDesignMatrix: return "DegenerateDesignMatrix";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AllExcludedFromMAPE: return "AllExcludedFromMAPE";
    case ErrorCode::GraphMismatch: return "GraphMismatch";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
  }
  return "Unknown";
}

/// Validation failures (bad input, bad config) as opposed to failures while
/// running an otherwise valid job. The CLI maps these to exit code 1.
constexpr bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicateNodeId:
    case ErrorCode::DanglingEdgeEndpoint:
    case ErrorCode::DuplicateEdge:
    case ErrorCode::InvalidGraph:
    case ErrorCode::EmptyGraph:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidFraction:
    case ErrorCode::TooFewUnlabeled:
    case ErrorCode::BudgetTooLarge:
    case ErrorCode::MissingActivityVector:
    case ErrorCode::GraphMismatch:
    case ErrorCode::UnknownSubcommand:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace roadsense
