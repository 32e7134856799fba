#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace deskcell {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct DimensionError : Error { using Error::Error; };
struct SingularityError : Error { using Error::Error; };
struct BehindCameraError : Error { using Error::Error; };
struct InvalidDepthError : Error { using Error::Error; };

// wire protocol
struct FramingError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };

// perception
struct CalibrationError : Error { using Error::Error; };
struct NoTargetError : Error { using Error::Error; };

// recording
struct StateGapError : Error { using Error::Error; };
struct WriteError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct CorruptEpisodeError : Error { using Error::Error; };

// configuration / startup
struct StartupError : Error { using Error::Error; };

/// Carries every violation found, not just the first.
struct ValidationError : Error {
  explicit ValidationError(std::vector<std::string> v)
      : Error(join(v)), violations(std::move(v)) {}

  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid workcell config:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
};

// evaluation
struct ActionSpaceError : Error { using Error::Error; };

}  // namespace deskcell
