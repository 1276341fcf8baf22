#pragma once

#include <stdexcept>
#include <string>

namespace decoy {

enum class errc {
    config,
    io,
    decode,
    not_found,
    store_corrupt,
    parse,
    transport,
    template_unresolved,
    dimension_mismatch,
    degenerate_zone,
    degenerate_placement,
    placement_infeasible,
    undefined_metric,
    wrong_mode,
};

// Carries a coarse error class so the CLI can map failures onto distinct
// exit codes without string-matching messages.
class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
    throw error(code, what);
}

inline const char* errc_name(errc c) {
    switch (c) {
    case errc::config:                return "config";
    case errc::io:                    return "io";
    case errc::decode:                return "decode";
    case errc::not_found:             return "not-found";
    case errc::store_corrupt:         return "store-corrupt";
    case errc::parse:                 return "parse";
    case errc::transport:             return "transport";
    case errc::template_unresolved:   return "template-unresolved";
    case errc::dimension_mismatch:    return "dimension-mismatch";
    case errc::degenerate_zone:       return "degenerate-zone";
    case errc::degenerate_placement:  return "degenerate-placement";
    case errc::placement_infeasible:  return "placement-infeasible";
    case errc::undefined_metric:      return "undefined-metric";
    case errc::wrong_mode:            return "wrong-mode";
    }
    return "unknown";
}

} // namespace decoy
