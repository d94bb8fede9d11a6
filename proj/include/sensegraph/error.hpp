#pragma once

#include <stdexcept>
#include <string>

namespace sensegraph {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data: malformed files, missing ids, dimension
// conflicts. The CLI maps these to exit code 1.
class InputError : public Error {
public:
    using Error::Error;
};

// Everything else that goes wrong while running a stage (I/O failures,
// remote endpoint failures). Exit code 2.
class RuntimeError : public Error {
public:
    using Error::Error;
};

} // namespace sensegraph
