#pragma once

#include <stdexcept>

namespace lensless {

// Base of every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define LENSLESS_DEFINE_ERROR(Name) \
  struct Name : Error {             \
    using Error::Error;             \
  }

// File formats and I/O.
LENSLESS_DEFINE_ERROR(IoFailure);
LENSLESS_DEFINE_ERROR(MalformedHeader);
LENSLESS_DEFINE_ERROR(TruncatedPayload);
LENSLESS_DEFINE_ERROR(NonFiniteData);
LENSLESS_DEFINE_ERROR(ZeroSizedField);
LENSLESS_DEFINE_ERROR(UnsupportedBitDepth);
LENSLESS_DEFINE_ERROR(EmptyDirectory);
LENSLESS_DEFINE_ERROR(UnreadableImage);

// Shape and domain discipline.
LENSLESS_DEFINE_ERROR(DomainMismatch);
LENSLESS_DEFINE_ERROR(ShapeMismatch);
LENSLESS_DEFINE_ERROR(GeometryMismatch);

// Differentiation and training.
LENSLESS_DEFINE_ERROR(GraphCycle);
LENSLESS_DEFINE_ERROR(NonScalarLoss);
LENSLESS_DEFINE_ERROR(NonFiniteActivation);
LENSLESS_DEFINE_ERROR(NonFiniteGradient);
LENSLESS_DEFINE_ERROR(NonFiniteLoss);
LENSLESS_DEFINE_ERROR(EmptyDataset);

// Iterative solvers.
LENSLESS_DEFINE_ERROR(NegativeThreshold);
LENSLESS_DEFINE_ERROR(DivergenceDetected);

// Calibration.
LENSLESS_DEFINE_ERROR(AllZeroCapture);
LENSLESS_DEFINE_ERROR(TooFewPoints);
LENSLESS_DEFINE_ERROR(DegenerateConfiguration);
LENSLESS_DEFINE_ERROR(SingularHomography);

// Evaluation.
LENSLESS_DEFINE_ERROR(CountMismatch);
LENSLESS_DEFINE_ERROR(MissingPair);
LENSLESS_DEFINE_ERROR(ImageTooSmall);

#undef LENSLESS_DEFINE_ERROR

}  // namespace lensless
