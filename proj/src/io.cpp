#include "vtrhm/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vtrhm {

using nlohmann::json;

std::string grammar_to_json(const Grammar& g) {
    json doc;
    doc["format_version"] = kGrammarFormatVersion;
    doc["v"] = g.params.v;
    doc["L"] = g.params.L;
    doc["m2"] = g.params.m2;
    doc["m3"] = g.params.m3;
    doc["p2"] = g.params.p2;
    doc["p3"] = g.params.p3;
    doc["seed"] = g.params.seed;
    json levels = json::array();
    for (const auto& lev : g.levels) {
        json binary = json::array();
        for (size_t r = 0; r < lev.binary.size(); ++r)
            binary.push_back({lev.parent_of_binary(static_cast<int>(r)), lev.binary[r][0],
                              lev.binary[r][1]});
        json ternary = json::array();
        for (size_t r = 0; r < lev.ternary.size(); ++r)
            ternary.push_back({lev.parent_of_ternary(static_cast<int>(r)), lev.ternary[r][0],
                               lev.ternary[r][1], lev.ternary[r][2]});
        levels.push_back({{"binary", std::move(binary)}, {"ternary", std::move(ternary)}});
    }
    doc["levels"] = std::move(levels);
    return doc.dump(2) + "\n";
}

static int32_t checked_symbol(const json& j, int v, const char* what) {
    if (!j.is_number_integer()) throw std::runtime_error(std::string("grammar json: non-integer ") + what);
    const int64_t s = j.get<int64_t>();
    if (s < 0 || s >= v) throw std::runtime_error(std::string("grammar json: out-of-range ") + what);
    return static_cast<int32_t>(s);
}

Grammar grammar_from_json(const std::string& json_text) {
    json doc = json::parse(json_text);
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != kGrammarFormatVersion)
        throw std::runtime_error("grammar json: missing or unsupported format_version");
    Grammar g;
    g.params.v = doc.at("v").get<int>();
    g.params.L = doc.at("L").get<int>();
    g.params.m2 = doc.at("m2").get<int>();
    g.params.m3 = doc.at("m3").get<int>();
    g.params.p2 = doc.at("p2").get<double>();
    g.params.p3 = doc.at("p3").get<double>();
    g.params.seed = doc.at("seed").get<uint64_t>();
    const auto& levels = doc.at("levels");
    if (!levels.is_array() || static_cast<int>(levels.size()) != g.params.L)
        throw std::runtime_error("grammar json: levels array must have exactly L entries");
    const int v = g.params.v;
    for (const auto& jl : levels) {
        RuleLevel lev;
        lev.m2 = g.params.m2;
        lev.m3 = g.params.m3;
        const auto& jb = jl.at("binary");
        const auto& jt = jl.at("ternary");
        if (static_cast<int>(jb.size()) != v * g.params.m2 ||
            static_cast<int>(jt.size()) != v * g.params.m3)
            throw std::runtime_error("grammar json: rule count does not match v*m2 / v*m3");
        int expect_parent = 0, seen = 0;
        for (const auto& jr : jb) {
            if (!jr.is_array() || jr.size() != 3)
                throw std::runtime_error("grammar json: binary rule must be [parent, a, b]");
            const int32_t parent = checked_symbol(jr[0], v, "parent");
            if (parent != expect_parent)
                throw std::runtime_error("grammar json: binary rules must be grouped by parent in order");
            lev.binary.push_back({checked_symbol(jr[1], v, "child"), checked_symbol(jr[2], v, "child")});
            if (++seen == g.params.m2) { seen = 0; ++expect_parent; }
        }
        expect_parent = seen = 0;
        for (const auto& jr : jt) {
            if (!jr.is_array() || jr.size() != 4)
                throw std::runtime_error("grammar json: ternary rule must be [parent, a, b, c]");
            const int32_t parent = checked_symbol(jr[0], v, "parent");
            if (parent != expect_parent)
                throw std::runtime_error("grammar json: ternary rules must be grouped by parent in order");
            lev.ternary.push_back({checked_symbol(jr[1], v, "child"), checked_symbol(jr[2], v, "child"),
                                   checked_symbol(jr[3], v, "child")});
            if (++seen == g.params.m3) { seen = 0; ++expect_parent; }
        }
        g.levels.push_back(std::move(lev));
    }
    return g;
}

void save_grammar(const Grammar& g, const std::string& path) { write_file(path, grammar_to_json(g)); }

Grammar load_grammar(const std::string& path) { return grammar_from_json(read_file(path)); }

void save_dataset(const Dataset& data, const std::string& path) {
    std::string out = "format_version\t" + std::to_string(kDatasetFormatVersion) + "\n";
    for (const auto& s : data) {
        out += std::to_string(s.label);
        out += '\t';
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(s.tokens[i]);
        }
        out += '\n';
    }
    write_file(path, out);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("format_version\t", 0) != 0)
        throw std::runtime_error("dataset: missing format_version header");
    if (std::stoi(line.substr(line.find('\t') + 1)) != kDatasetFormatVersion)
        throw std::runtime_error("dataset: unsupported format_version");
    Dataset data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("dataset: missing tab separator");
        Sentence s;
        s.label = std::stoi(line.substr(0, tab));
        std::istringstream toks(line.substr(tab + 1));
        int t;
        while (toks >> t) s.tokens.push_back(t);
        if (s.tokens.empty()) throw std::runtime_error("dataset: sentence without tokens");
        data.push_back(std::move(s));
    }
    return data;
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : path_(path) {
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += cells[i];
    }
    buf_ += '\n';
}

void CsvWriter::close() {
    if (!open_) return;
    open_ = false;
    write_file(path_, buf_);
}

CsvWriter::~CsvWriter() { close(); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

}  // namespace vtrhm
