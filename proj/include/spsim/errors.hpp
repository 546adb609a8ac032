#pragma once

#include <stdexcept>
#include <string>

namespace spsim {

/// Base class for all spsim errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SingularMatrix final : Error { using Error::Error; };
struct RankDeficient final : Error { using Error::Error; };
struct NoConvergence final : Error { using Error::Error; };
struct NonFiniteEvaluation final : Error { using Error::Error; };
struct DimensionMismatch final : Error { using Error::Error; };
struct InvalidEpsilon final : Error { using Error::Error; };
struct ModeShapeMismatch final : Error { using Error::Error; };
struct SingularJacobian final : Error { using Error::Error; };
struct NonPhysicalState final : Error { using Error::Error; };
struct InvalidParams final : Error { using Error::Error; };
struct NonFiniteState final : Error { using Error::Error; };
struct GridMismatch final : Error { using Error::Error; };

/// Configuration / input file errors. Carries file and line context in the message.
struct ParseError final : Error { using Error::Error; };

} // namespace spsim
