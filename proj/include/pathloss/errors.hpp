#pragma once

#include <stdexcept>
#include <string>

namespace pathloss {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// raster-geo
class OutOfBounds : public Error { public: using Error::Error; };
class BadChannel : public Error { public: using Error::Error; };
class DegenerateScene : public Error { public: using Error::Error; };
class BadMagic : public Error { public: using Error::Error; };
class BadVersion : public Error { public: using Error::Error; };
class TruncatedFile : public Error { public: using Error::Error; };

// scene-synth
class BadConfig : public Error { public: using Error::Error; };
class DegenerateLink : public Error { public: using Error::Error; };

// empirical-ci
class NonPositiveInput : public Error { public: using Error::Error; };
class DistanceBelowReference : public Error { public: using Error::Error; };
class NoUsableSamples : public Error { public: using Error::Error; };

// imaging / feature pipeline
class BadStats : public Error { public: using Error::Error; };

// nn-core
class ShapeMismatch : public Error { public: using Error::Error; };
class NoGraph : public Error { public: using Error::Error; };

// train-eval
class EmptySplit : public Error { public: using Error::Error; };
class DivergenceDetected : public Error { public: using Error::Error; };
class ConstantSeries : public Error { public: using Error::Error; };
class ZeroTarget : public Error { public: using Error::Error; };
class MissingCheckpoint : public Error { public: using Error::Error; };
class CheckpointMismatch : public Error { public: using Error::Error; };
class EmptyTable : public Error { public: using Error::Error; };

} // namespace pathloss
