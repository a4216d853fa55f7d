#pragma once

#include <stdexcept>
#include <string>

namespace projood {

// Base of every error raised by the library. Each subclass maps onto one
// failure category so that callers (the CLI in particular) can translate
// them into exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configuration values, preconditions on arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ShapeMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Problems with files produced or consumed by the pipeline.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

class IoError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class MalformedFile : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

// IDX-specific flavours of a malformed file.
class BadMagic : public MalformedFile {
 public:
  using MalformedFile::MalformedFile;
};

class TruncatedPayload : public MalformedFile {
 public:
  using MalformedFile::MalformedFile;
};

class CountMismatch : public MalformedFile {
 public:
  using MalformedFile::MalformedFile;
};

class VersionMismatch : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class ArchitectureMismatch : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

// Divergence, non-finite values, solver failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace projood
