#pragma once

#include <stdexcept>
#include <string>

namespace sparsetomo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class ConfigurationError : public Error { public: using Error::Error; };
class RangeError : public Error { public: using Error::Error; };
class GeometryError : public Error { public: using Error::Error; };
class NumericalError : public Error { public: using Error::Error; };
class FitError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

} // namespace sparsetomo
