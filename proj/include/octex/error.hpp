#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace octex {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file does not conform to its documented schema (token streams,
// templates, gold files, profiles). The CLI maps these to exit code 4.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class VersionError : public SchemaError {
 public:
  VersionError(const std::string& found, const std::vector<std::string>& supported)
      : SchemaError(compose(found, supported)), found_(found), supported_(supported) {}

  const std::string& found() const noexcept { return found_; }
  const std::vector<std::string>& supported() const noexcept { return supported_; }

 private:
  static std::string compose(const std::string& found, const std::vector<std::string>& supported) {
    std::string msg = "unsupported schema_version \"" + found + "\"; supported:";
    for (const auto& s : supported) msg += " \"" + s + "\"";
    return msg;
  }

  std::string found_;
  std::vector<std::string> supported_;
};

class TemplateError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

// Caller broke a documented precondition (e.g. mixed crop ids).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DicomError : public Error {
 public:
  using Error::Error;
};

// The data set has no encapsulated-document element.
class NotEncapsulatedError : public DicomError {
 public:
  using DicomError::DicomError;
};

// The encapsulated document is not a PDF.
class WrongPayloadError : public DicomError {
 public:
  using DicomError::DicomError;
};

// Predictions reference report ids that have no gold labels.
class OrphanPredictionError : public SchemaError {
 public:
  explicit OrphanPredictionError(std::vector<std::string> orphans)
      : SchemaError(compose(orphans)), orphans_(std::move(orphans)) {}

  const std::vector<std::string>& orphans() const noexcept { return orphans_; }

 private:
  static std::string compose(const std::vector<std::string>& orphans) {
    std::string msg = "predictions without gold labels:";
    for (const auto& o : orphans) msg += " " + o;
    return msg;
  }

  std::vector<std::string> orphans_;
};

}  // namespace octex
