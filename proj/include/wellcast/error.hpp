#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wellcast {

/// Root of every error the library throws. Callers that only need to know
/// "a stage failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define WELLCAST_DEFINE_ERROR(Name)                 \
    class Name : public Error {                     \
    public:                                         \
        using Error::Error;                         \
    }

WELLCAST_DEFINE_ERROR(SchemaError);
WELLCAST_DEFINE_ERROR(DataError);
WELLCAST_DEFINE_ERROR(ImputationError);
WELLCAST_DEFINE_ERROR(SplitError);
WELLCAST_DEFINE_ERROR(FeatureError);
WELLCAST_DEFINE_ERROR(DomainError);
WELLCAST_DEFINE_ERROR(ScalerError);
WELLCAST_DEFINE_ERROR(WindowingError);
WELLCAST_DEFINE_ERROR(ModelError);
WELLCAST_DEFINE_ERROR(SearchError);
WELLCAST_DEFINE_ERROR(CalibrationError);
WELLCAST_DEFINE_ERROR(ReportError);
WELLCAST_DEFINE_ERROR(MetricError);
WELLCAST_DEFINE_ERROR(OracleError);
WELLCAST_DEFINE_ERROR(GeneratorError);
WELLCAST_DEFINE_ERROR(StageError);

#undef WELLCAST_DEFINE_ERROR

/// Raised when the training loss stops being finite.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace wellcast
