#pragma once

#include <stdexcept>
#include <string>

namespace scl {

// Every failure the library raises derives from Error so callers (the CLI in
// particular) can report a stable kind() next to the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SCL_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(tag, what) {}     \
  };

SCL_DEFINE_ERROR(DimensionError, "dimension")
SCL_DEFINE_ERROR(ParameterError, "parameter")
SCL_DEFINE_ERROR(StateError, "state")
SCL_DEFINE_ERROR(FormatError, "format")
SCL_DEFINE_ERROR(DataError, "data")
SCL_DEFINE_ERROR(ConfigError, "config")
SCL_DEFINE_ERROR(IndexError, "index")
SCL_DEFINE_ERROR(UndefinedError, "undefined")
SCL_DEFINE_ERROR(NotFoundError, "not_found")

#undef SCL_DEFINE_ERROR

}  // namespace scl
