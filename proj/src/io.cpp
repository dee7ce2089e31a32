#include "fqrt/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fqrt {

namespace {

struct DoubleField {
    const char* key;
    double ModelParams::* member;
};

constexpr std::array<DoubleField, 11> kDoubleFields{{
    {"lambda1", &ModelParams::lambda1},
    {"lambda2", &ModelParams::lambda2},
    {"m1", &ModelParams::m1},
    {"m2", &ModelParams::m2},
    {"mu11", &ModelParams::mu11},
    {"mu12", &ModelParams::mu12},
    {"mu21", &ModelParams::mu21},
    {"mu22", &ModelParams::mu22},
    {"theta1", &ModelParams::theta1},
    {"theta2", &ModelParams::theta2},
    {"kappa", &ModelParams::kappa},
}};

struct IntField {
    const char* key;
    int ModelParams::* member;
};

constexpr std::array<IntField, 2> kIntFields{{
    {"j", &ModelParams::j},
    {"k", &ModelParams::k},
}};

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw std::invalid_argument("cannot parse " + what + " value \"" + text + "\"");
    }
    return v;
}

long long parse_int(const std::string& text, const std::string& what) {
    long long v = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw std::invalid_argument("cannot parse " + what + " value \"" + text + "\"");
    }
    return v;
}

}  // namespace

std::string format_shortest(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

ModelParams params_from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("params JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw std::invalid_argument("params JSON must be an object");
    }
    for (const auto& [key, value] : doc.items()) {
        const bool known =
            std::any_of(kDoubleFields.begin(), kDoubleFields.end(),
                        [&key](const DoubleField& f) { return key == f.key; }) ||
            std::any_of(kIntFields.begin(), kIntFields.end(),
                        [&key](const IntField& f) { return key == f.key; });
        if (!known) {
            throw std::invalid_argument("unknown parameter key \"" + key + "\"");
        }
        (void)value;
    }
    ModelParams p;
    for (const DoubleField& f : kDoubleFields) {
        if (!doc.contains(f.key) || !doc[f.key].is_number()) {
            throw std::invalid_argument(std::string("parameter \"") + f.key +
                                        "\" missing or not a number");
        }
        p.*f.member = doc[f.key].get<double>();
    }
    for (const IntField& f : kIntFields) {
        if (!doc.contains(f.key) || !doc[f.key].is_number_integer()) {
            throw std::invalid_argument(std::string("parameter \"") + f.key +
                                        "\" missing or not an integer");
        }
        p.*f.member = doc[f.key].get<int>();
    }
    return p;
}

std::string params_json_text(const ModelParams& p) {
    nlohmann::ordered_json doc;
    for (const DoubleField& f : kDoubleFields) doc[f.key] = p.*f.member;
    for (const IntField& f : kIntFields) doc[f.key] = p.*f.member;
    return doc.dump(2) + "\n";
}

ModelParams read_params_file(const std::string& path) {
    return params_from_json_text(read_text_file(path));
}

void apply_overrides(ModelParams& p, const std::vector<std::string>& assignments) {
    for (const std::string& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw std::invalid_argument("override must look like key=value, got \"" + a + "\"");
        }
        const std::string key = a.substr(0, eq);
        const std::string value = a.substr(eq + 1);
        bool found = false;
        for (const DoubleField& f : kDoubleFields) {
            if (key == f.key) {
                p.*f.member = parse_double(value, key);
                found = true;
                break;
            }
        }
        if (!found) {
            for (const IntField& f : kIntFields) {
                if (key == f.key) {
                    p.*f.member = static_cast<int>(parse_int(value, key));
                    found = true;
                    break;
                }
            }
        }
        if (!found) {
            throw std::invalid_argument("unknown parameter key \"" + key + "\"");
        }
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open \"" + path + "\" for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (!in.good() && !in.eof()) {
        throw IoError("failed reading \"" + path + "\"");
    }
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open \"" + path + "\" for writing");
    }
    out << content;
    if (!out.good()) {
        throw IoError("failed writing \"" + path + "\"");
    }
}

}  // namespace fqrt
