#pragma once

#include <string>

#include "vtrhm/grammar.hpp"

namespace vtrhm {

inline constexpr int kGrammarFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

// Grammar <-> JSON. The document carries format_version, the parameters and
// per-level rule arrays [[parent, a, b], ...] / [[parent, a, b, c], ...] with
// levels ordered root-first. Parsers reject unknown versions, malformed rule
// arity and out-of-range symbols (std::runtime_error).
std::string grammar_to_json(const Grammar& g);
Grammar grammar_from_json(const std::string& json_text);
void save_grammar(const Grammar& g, const std::string& path);
Grammar load_grammar(const std::string& path);

// Dataset as TSV: a "format_version<TAB>1" header line, then one sentence per
// line as "label<TAB>tok tok tok ...".
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

// Shortest-round-trip decimal with up to 17 significant digits, locale-free.
std::string format_double(double x);

/// Minimal CSV emitter: comma separator, '.' decimal point, header row,
/// doubles via format_double. Rows are flushed on close() / destruction.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::string path_;
    std::string buf_;
    bool open_ = true;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace vtrhm
