#pragma once

#include <stdexcept>
#include <string>

namespace vocabdiff {

// Invalid user input: malformed files, bad arguments, violated preconditions.
// The CLI maps these to exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input error tied to a row of a delimited file (1-based data row, header excluded).
class RowError : public InputError {
public:
    RowError(std::size_t row, const std::string& what)
        : InputError("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Numerical failure during training (divergence, non-finite loss).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vocabdiff
