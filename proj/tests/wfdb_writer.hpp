#pragma once

// Test-only sibling of the reader: emits WFDB headers and format-16 signal
// bytes so round trips can be checked without shipping corpus files.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ecgcl/wfdb.hpp"

namespace testutil {

inline std::string write_header(const ecgcl::wfdb::WfdbHeader& h) {
    std::ostringstream os;
    os << h.record_name << " " << h.n_signals << " " << h.sampling_rate << " " << h.n_samples
       << "\n";
    for (const ecgcl::wfdb::SignalSpec& s : h.signals) {
        os << s.file_name << " " << s.format_code << " " << s.adc_gain << "(" << s.baseline
           << ")/" << (s.units.empty() ? "mV" : s.units) << " 16 0 0 0 0 " << s.lead_name << "\n";
    }
    return os.str();
}

// adc: one vector per signal, all the same length, interleaved on disk
inline std::vector<uint8_t> write_signal(const std::vector<std::vector<int16_t>>& adc) {
    const size_t n_sig = adc.size();
    const size_t n_samp = adc.front().size();
    std::vector<uint8_t> bytes;
    bytes.reserve(2 * n_sig * n_samp);
    for (size_t t = 0; t < n_samp; ++t) {
        for (size_t s = 0; s < n_sig; ++s) {
            const uint16_t u = static_cast<uint16_t>(adc[s][t]);
            bytes.push_back(static_cast<uint8_t>(u & 0xFF));
            bytes.push_back(static_cast<uint8_t>(u >> 8));
        }
    }
    return bytes;
}

}  // namespace testutil
