#pragma once

#include <stdexcept>
#include <string>

namespace healthtags {

// Configuration or usage problem. The CLI maps this to exit status 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data failed validation, or a numeric routine was handed data it cannot
// process (constant vector, singular system). Exit status 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An external service (geocoder, tagger) could not be reached or kept failing
// after the retry budget was spent. Exit status 3.
class ServiceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace healthtags
