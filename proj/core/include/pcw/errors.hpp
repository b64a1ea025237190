#pragma once

#include <stdexcept>
#include <string>

namespace pcw {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid physical or numerical parameter (bad geometry, non-positive rate, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A linear-algebra or optimisation routine failed to produce a result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The mode has zero frequency, so E (and v_g) is undefined.
class DegenerateModeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NoGapError : public Error {
public:
    using Error::Error;
};

class NoGuidedModeError : public Error {
public:
    using Error::Error;
};

class OutOfBandError : public Error {
public:
    using Error::Error;
};

/// Emitter rate does not exceed the uncoupled background rate.
class NotCoupledError : public Error {
public:
    using Error::Error;
};

/// A quantity is mathematically undefined for the given input (0/0 and friends).
class UndefinedError : public Error {
public:
    using Error::Error;
};

class FitFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// An input directory held no usable histograms.
class EmptyCampaignError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace pcw
