#include "vocabdiff/tsv.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "vocabdiff/error.hpp"

namespace vocabdiff::tsv {

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

namespace {

bool read_nonblank(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return true;
    }
    return false;
}

}  // namespace

Reader::Reader(std::istream& in, char sep) : in_(in), sep_(sep) {
    std::string line;
    if (!read_nonblank(in_, line)) throw InputError("missing header row");
    // Tolerate a UTF-8 byte order mark.
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    header_ = split(line, sep_);
}

std::optional<std::size_t> Reader::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    return std::nullopt;
}

std::size_t Reader::require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw InputError("missing column '" + std::string(name) + "'");
}

bool Reader::next(std::vector<std::string>& fields) {
    std::string line;
    if (!read_nonblank(in_, line)) return false;
    ++row_;
    fields = split(line, sep_);
    if (fields.size() != header_.size())
        throw RowError(row_, "expected " + std::to_string(header_.size()) + " fields, found " +
                                 std::to_string(fields.size()));
    return true;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields, char sep) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].find_first_of(std::string{sep, '\n', '\r'}) != std::string::npos)
            throw InputError("field contains a separator or line break: '" + fields[i] + "'");
        if (i) out << sep;
        out << fields[i];
    }
    out << '\n';
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ')) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    std::string buf(text);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size()) return std::nullopt;
    if (std::isnan(v)) return std::nullopt;
    return v;
}

}  // namespace vocabdiff::tsv
