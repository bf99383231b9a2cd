#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ecgcl/data.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl::wfdb {

// Only the signed 16-bit little-endian format is supported; the 100 Hz files
// of the target corpus use nothing else.
constexpr int kSupportedFormat = 16;
constexpr int16_t kInvalidSample = -32768;
constexpr double kDefaultAdcGain = 200.0;

struct SignalSpec {
    std::string file_name;
    int format_code = kSupportedFormat;
    double adc_gain = kDefaultAdcGain;  // adc units per physical unit
    int baseline = 0;
    std::string units;
    std::string lead_name;
};

struct WfdbHeader {
    std::string record_name;
    int n_signals = 0;
    double sampling_rate = 0.0;
    int n_samples = 0;
    std::vector<SignalSpec> signals;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline bool parse_int(const std::string& s, int& out) {
    try {
        size_t pos = 0;
        out = std::stoi(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

// gain token forms: "1000", "1000.0(0)", "1000.0(0)/mV"
inline void parse_gain_token(const std::string& tok, SignalSpec& spec) {
    std::string rest = tok;
    const size_t slash = rest.find('/');
    if (slash != std::string::npos) {
        spec.units = rest.substr(slash + 1);
        rest = rest.substr(0, slash);
    }
    const size_t paren = rest.find('(');
    if (paren != std::string::npos) {
        const size_t close = rest.find(')', paren);
        if (close == std::string::npos) throw Error("malformed gain token '" + tok + "'");
        int base = 0;
        if (!parse_int(rest.substr(paren + 1, close - paren - 1), base))
            throw Error("malformed baseline in gain token '" + tok + "'");
        spec.baseline = base;
        rest = rest.substr(0, paren);
    }
    double gain = 0.0;
    if (!parse_double(rest, gain)) throw Error("malformed gain token '" + tok + "'");
    if (!(gain > 0.0)) throw Error("adc gain must be > 0, got '" + tok + "'");
    spec.adc_gain = gain;
}

}  // namespace detail

// Parse a WFDB text header: a record line "name n_signals fs n_samples"
// followed by one line per signal. '#' lines are comments. Unsupported
// storage formats are rejected by code.
inline WfdbHeader parse_header(const std::string& text) {
    WfdbHeader header;
    std::istringstream stream(text);
    std::string line;
    bool have_record_line = false;

    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        const std::vector<std::string> tok = detail::split_ws(line);
        if (!have_record_line) {
            if (tok.size() < 4)
                throw Error("malformed record line (need name n_signals fs n_samples): '" + line +
                            "'");
            header.record_name = tok[0];
            // strip a segment suffix if present
            const size_t slash = header.record_name.find('/');
            if (slash != std::string::npos) header.record_name.resize(slash);
            if (!detail::parse_int(tok[1], header.n_signals) || header.n_signals < 1)
                throw Error("malformed signal count '" + tok[1] + "'");
            if (!detail::parse_double(tok[2], header.sampling_rate) || header.sampling_rate <= 0.0)
                throw Error("malformed sampling rate '" + tok[2] + "'");
            if (!detail::parse_int(tok[3], header.n_samples) || header.n_samples < 1)
                throw Error("malformed sample count '" + tok[3] + "'");
            have_record_line = true;
            continue;
        }

        if (static_cast<int>(header.signals.size()) == header.n_signals)
            throw Error("header lists more signals than declared (" +
                        std::to_string(header.n_signals) + ")");
        if (tok.size() < 2) throw Error("malformed signal line: '" + line + "'");
        SignalSpec spec;
        spec.file_name = tok[0];
        int fmt = 0;
        if (!detail::parse_int(tok[1], fmt))
            throw Error("unsupported signal format '" + tok[1] + "'");
        if (fmt != kSupportedFormat)
            throw Error("unsupported signal format " + std::to_string(fmt) +
                        " (only format 16 is handled)");
        spec.format_code = fmt;
        if (tok.size() >= 3) detail::parse_gain_token(tok[2], spec);
        // optional tail: adc_res adc_zero init_value checksum block_size description
        if (tok.size() >= 9) {
            spec.lead_name = tok[8];
            for (size_t i = 9; i < tok.size(); ++i) spec.lead_name += " " + tok[i];
        } else {
            spec.lead_name = "sig" + std::to_string(header.signals.size());
        }
        header.signals.push_back(std::move(spec));
    }

    if (!have_record_line) throw Error("empty header: no record line");
    if (static_cast<int>(header.signals.size()) != header.n_signals)
        throw Error("header declares " + std::to_string(header.n_signals) + " signals but lists " +
                    std::to_string(header.signals.size()));
    return header;
}

// Decode a format-16 signal file: little-endian int16 frames interleaved by
// signal. Physical value = (adc - baseline) / adc_gain.
inline EcgRecord read_signal(const WfdbHeader& header, const std::vector<uint8_t>& bytes) {
    const size_t expected = 2ULL * header.n_signals * header.n_samples;
    if (bytes.size() != expected)
        throw Error("signal byte length " + std::to_string(bytes.size()) + " does not match " +
                    std::to_string(expected) + " for " + std::to_string(header.n_signals) + "x" +
                    std::to_string(header.n_samples));

    EcgRecord rec;
    rec.record_id = header.record_name;
    rec.sampling_rate = header.sampling_rate;
    rec.signal = Tensor({header.n_signals, header.n_samples});
    for (int t = 0; t < header.n_samples; ++t) {
        for (int s = 0; s < header.n_signals; ++s) {
            const size_t off = 2ULL * (static_cast<size_t>(t) * header.n_signals + s);
            const int16_t adc = static_cast<int16_t>(
                static_cast<uint16_t>(bytes[off]) | (static_cast<uint16_t>(bytes[off + 1]) << 8));
            if (adc == kInvalidSample)
                throw Error("invalid sample sentinel in signal " + std::to_string(s) +
                            " at sample index " + std::to_string(t));
            const SignalSpec& spec = header.signals[static_cast<size_t>(s)];
            rec.signal.at(s, t) = (adc - spec.baseline) / spec.adc_gain;
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// diagnostic statement -> superclass mapping
// ---------------------------------------------------------------------------

// Bundled copy of the corpus' diagnostic-statement table: every diagnostic
// scp code and the superclass it aggregates to.
inline const std::map<std::string, std::string>& scp_superclass_table() {
    static const std::map<std::string, std::string> table = {
        // NORM
        {"NORM", "NORM"},
        // MI
        {"IMI", "MI"}, {"ASMI", "MI"}, {"ILMI", "MI"}, {"AMI", "MI"}, {"ALMI", "MI"},
        {"INJAS", "MI"}, {"LMI", "MI"}, {"INJAL", "MI"}, {"IPLMI", "MI"}, {"IPMI", "MI"},
        {"INJIN", "MI"}, {"INJLA", "MI"}, {"PMI", "MI"}, {"INJIL", "MI"},
        // STTC
        {"NDT", "STTC"}, {"NST_", "STTC"}, {"DIG", "STTC"}, {"LNGQT", "STTC"}, {"ISC_", "STTC"},
        {"ISCAL", "STTC"}, {"ISCIN", "STTC"}, {"ISCIL", "STTC"}, {"ISCAS", "STTC"},
        {"ISCLA", "STTC"}, {"ANEUR", "STTC"}, {"EL", "STTC"}, {"ISCAN", "STTC"},
        // CD
        {"LAFB", "CD"}, {"IRBBB", "CD"}, {"1AVB", "CD"}, {"IVCD", "CD"}, {"CRBBB", "CD"},
        {"CLBBB", "CD"}, {"LPFB", "CD"}, {"WPW", "CD"}, {"ILBBB", "CD"}, {"3AVB", "CD"},
        {"2AVB", "CD"},
        // HYP
        {"LVH", "HYP"}, {"LAO/LAE", "HYP"}, {"RVH", "HYP"}, {"RAO/RAE", "HYP"}, {"SEHYP", "HYP"},
    };
    return table;
}

constexpr double kScpLikelihoodThreshold = 50.0;

// Codes at or above the likelihood threshold map through the bundled table;
// unmapped codes are ignored. An all-zero result is allowed (such records
// are excluded from finetuning/evaluation downstream).
inline LabelVector map_scp_to_superclass(const std::map<std::string, double>& scp_codes) {
    LabelVector lv;
    const auto& table = scp_superclass_table();
    for (const auto& [code, likelihood] : scp_codes) {
        if (likelihood < kScpLikelihoodThreshold) continue;
        auto it = table.find(code);
        if (it == table.end()) continue;
        const int idx = superclass_index(it->second);
        if (idx >= 0) lv.set(idx);
    }
    return lv;
}

// ---------------------------------------------------------------------------
// metadata CSV
// ---------------------------------------------------------------------------

struct PtbxlMetadataRow {
    long ecg_id = 0;
    std::map<std::string, double> scp_codes;
    int strat_fold = 0;
    std::string filename_lr;
};

namespace detail {

// RFC-4180-ish field splitter: quoted fields may contain commas and doubled
// quotes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

// scp_codes cells look like a small python dict: {'NORM': 100.0, 'SR': 0.0}
inline std::map<std::string, double> parse_scp_map(const std::string& cell) {
    std::map<std::string, double> out;
    size_t i = 0;
    while (i < cell.size()) {
        const char q = cell[i];
        if (q != '\'' && q != '"') {
            ++i;
            continue;
        }
        const size_t end = cell.find(q, i + 1);
        if (end == std::string::npos) break;
        const std::string key = cell.substr(i + 1, end - i - 1);
        size_t j = cell.find(':', end);
        if (j == std::string::npos) break;
        ++j;
        while (j < cell.size() && cell[j] == ' ') ++j;
        size_t k = j;
        while (k < cell.size() && cell[k] != ',' && cell[k] != '}') ++k;
        double val = 0.0;
        if (detail::parse_double(cell.substr(j, k - j), val)) out[key] = val;
        i = k;
    }
    return out;
}

}  // namespace detail

// Parse the corpus metadata CSV. Requires columns ecg_id, scp_codes,
// strat_fold and filename_lr; other columns are ignored.
inline std::vector<PtbxlMetadataRow> parse_metadata_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("metadata csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> cols = detail::split_csv_line(line);
    int ci_id = -1, ci_scp = -1, ci_fold = -1, ci_file = -1;
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
        const std::string& c = cols[static_cast<size_t>(i)];
        if (c == "ecg_id") ci_id = i;
        else if (c == "scp_codes") ci_scp = i;
        else if (c == "strat_fold") ci_fold = i;
        else if (c == "filename_lr") ci_file = i;
    }
    if (ci_id < 0 || ci_scp < 0 || ci_fold < 0 || ci_file < 0)
        throw Error("metadata csv: missing one of ecg_id/scp_codes/strat_fold/filename_lr");

    std::vector<PtbxlMetadataRow> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::split_csv_line(line);
        const int needed = std::max(std::max(ci_id, ci_scp), std::max(ci_fold, ci_file));
        if (static_cast<int>(f.size()) <= needed)
            throw Error("metadata csv line " + std::to_string(line_no) + ": too few columns");
        PtbxlMetadataRow row;
        try {
            row.ecg_id = std::stol(f[static_cast<size_t>(ci_id)]);
            row.strat_fold = std::stoi(f[static_cast<size_t>(ci_fold)]);
        } catch (...) {
            throw Error("metadata csv line " + std::to_string(line_no) + ": bad ecg_id/strat_fold");
        }
        if (row.strat_fold < 1 || row.strat_fold > 10)
            throw Error("metadata csv line " + std::to_string(line_no) + ": strat_fold " +
                        std::to_string(row.strat_fold) + " outside 1..10");
        row.filename_lr = f[static_cast<size_t>(ci_file)];
        if (row.filename_lr.empty())
            throw Error("metadata csv line " + std::to_string(line_no) + ": empty filename_lr");
        row.scp_codes = detail::parse_scp_map(f[static_cast<size_t>(ci_scp)]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace ecgcl::wfdb
