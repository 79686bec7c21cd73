#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "hepar/error.hpp"
#include "hepar/stad.hpp"

namespace hepar {

namespace csv {

std::string field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

std::vector<std::string> split(const std::string& line, std::size_t line_no, const std::string& what) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c != '"') {
                fields.back() += c;
            } else if (i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else {
                quoted = false;
                require(i + 1 == line.size() || line[i + 1] == ',', ErrorKind::Validation,
                        what + " line " + std::to_string(line_no) + ": text after closing quote");
            }
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c == '"' && fields.back().empty()) {
            quoted = true;
        } else {
            fields.back() += c;
        }
    }
    require(!quoted, ErrorKind::Validation, what + " line " + std::to_string(line_no) + ": unterminated quote");
    return fields;
}

}  // namespace csv

namespace {

std::string format_value(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

std::vector<std::string> header() {
    std::vector<std::string> h{"case_id", "modality", "vendor_flag"};
    for (auto name : kStadFeatureNames) h.emplace_back(name);
    return h;
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == s.size() && !s.empty() && std::isfinite(x), ErrorKind::Validation,
            "feature CSV line " + std::to_string(line) + ": column " + column + " has non-numeric value '" + s + "'");
    return x;
}

}  // namespace

void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
    const auto h = header();
    for (std::size_t c = 0; c < h.size(); ++c) out << (c ? "," : "") << h[c];
    out << '\n';
    for (const auto& r : rows) {
        out << csv::field(r.case_id) << ',' << csv::field(r.modality) << ',' << r.features.vendor_flag();
        for (double x : r.features.values) out << ',' << format_value(x);
        out << '\n';
    }
}

std::string format_feature_csv(const std::vector<FeatureRow>& rows) {
    std::ostringstream s;
    write_feature_csv(s, rows);
    return s.str();
}

std::vector<FeatureRow> read_feature_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Validation, "feature CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto expected = header();
    const auto got = csv::split(line, 1, "feature CSV");
    require(got == expected, ErrorKind::Validation,
            "feature CSV header does not match the canonical STAD column order");
    std::vector<FeatureRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = csv::split(line, line_no, "feature CSV");
        require(f.size() == expected.size(), ErrorKind::Validation,
                "feature CSV line " + std::to_string(line_no) + ": expected " + std::to_string(expected.size()) +
                    " fields, got " + std::to_string(f.size()));
        FeatureRow r;
        r.case_id = f[0];
        r.modality = f[1];
        const double flag = parse_double(f[2], line_no, "vendor_flag");
        require(flag == std::floor(flag) && flag >= 0 && flag <= vendor_code(Vendor::Other), ErrorKind::Validation,
                "feature CSV line " + std::to_string(line_no) + ": invalid vendor_flag '" + f[2] + "'");
        r.features.vendor = static_cast<Vendor>(int(flag));
        for (std::size_t n = 0; n < kStadFeatureCount; ++n)
            r.features.values[n] = parse_double(f[3 + n], line_no, expected[3 + n]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<FeatureRow> parse_feature_csv(std::string_view text) {
    std::istringstream s{std::string(text)};
    return read_feature_csv(s);
}

}  // namespace hepar
