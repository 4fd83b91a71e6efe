// error.hpp - exception types shared by every voxshape module.
#pragma once

#include <stdexcept>
#include <string>

namespace voxshape {

// Base for all library errors. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { config, io, numeric };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

// Grids with incompatible dims or spacing.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(Category::numeric, what) {}
};

// Bad argument values (empty lists, even kernels, too many modes...).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(Category::config, what) {}
};

// Invalid phantom or defect specification.
class SpecError : public Error {
 public:
  explicit SpecError(const std::string& what) : Error(Category::config, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(Category::io, what) {}
};

class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& what) : Error(Category::io, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

// Empty foreground or otherwise unusable input to a numerical stage.
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(Category::numeric, what) {}
};

// A metric that is undefined for the given inputs (e.g. HD95 on an empty mask).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(Category::numeric, what) {}
};

// Post-processing removed every voxel. stage() names the culprit.
class EmptyImplantError : public Error {
 public:
  EmptyImplantError(const std::string& stage, const std::string& what)
      : Error(Category::numeric, what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace voxshape
