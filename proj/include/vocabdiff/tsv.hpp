#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vocabdiff::tsv {

std::vector<std::string> split(std::string_view line, char sep = '\t');

// Header-indexed reader over a delimited stream. Blank lines are skipped;
// a trailing '\r' is stripped so CRLF files parse the same as LF files.
class Reader {
public:
    explicit Reader(std::istream& in, char sep = '\t');

    const std::vector<std::string>& header() const { return header_; }
    std::optional<std::size_t> column(std::string_view name) const;
    // Throws InputError naming the column when it is absent.
    std::size_t require(std::string_view name) const;

    // Reads the next data row; false at end of input. Rows with a different
    // field count than the header raise RowError.
    bool next(std::vector<std::string>& fields);
    // 1-based index of the row most recently returned by next().
    std::size_t row() const { return row_; }

private:
    std::istream& in_;
    char sep_;
    std::vector<std::string> header_;
    std::size_t row_ = 0;
};

// Writes one row; fields containing the separator or a newline are rejected.
void write_row(std::ostream& out, const std::vector<std::string>& fields, char sep = '\t');

// Shortest representation that round-trips through strtod.
std::string format_double(double v);
// Strict parse: the whole field must be a finite or infinite number.
std::optional<double> parse_double(std::string_view text);

}  // namespace vocabdiff::tsv
