#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "decoy/editor.hpp"
#include "decoy/sample.hpp"
#include "decoy/victim.hpp"

namespace decoy {

// Search-loop context handed to editor backends alongside the rendered
// prompt. Scripted editors act on it directly; HTTP editors ignore it.
struct editor_call_context {
    const attack_sample* sample = nullptr;
    image_dims dims;
    int depth = 1;
    int pass = 1;
    strategy strat = strategy::A;
    diagnosis diag = diagnosis::none;
    const std::vector<history_entry>* history = nullptr;
    std::uint64_t seed = 0; // derived per (sample, depth, pass)
};

class editor_backend {
public:
    virtual ~editor_backend() = default;
    // Raw editor reply; the search loop routes it through parse_edit_plan.
    virtual std::string propose(const prompt_bundle& prompt, const editor_call_context& ctx) = 0;
};

// Scripted victims, by behavior string:
//   "always-gt-center"                 clicks the target center
//   "coordinate-locked"                pinned to the target center no matter
//                                      what is painted on the screenshot
//   "fixed-point:X,Y"                  constant original-space pixel click
//   "nearest-injected:cos=C,radius=R"  clicks the center of the nearest
//                                      injected icon with cosine-to-
//                                      instruction > C within normalized-
//                                      diagonal radius R of the target
//                                      center, else the target center
//   "garbage"                          unparsable reply
//   "failing"                          raises transport
// Replies are emitted through format_response so every path exercises the
// response parser.
std::unique_ptr<victim_backend> make_scripted_victim(const std::string& behavior,
                                                     response_format format);

// Replays canned editor replies in call order and sticks on the last one when
// the script runs out. A "<<ERROR>>" entry raises transport instead.
class replay_editor final : public editor_backend {
public:
    explicit replay_editor(std::vector<std::string> script);

    std::string propose(const prompt_bundle&, const editor_call_context&) override;
    int calls() const { return calls_; }

private:
    std::vector<std::string> script_;
    int calls_ = 0;
};

struct scripted_strategic_options {
    std::vector<std::string> related_descs; // retrieval keys for on-theme icons
    int edits_per_attempt = 2;
    double icon_side = 0.05;     // placed icon side, normalized
    double target_delta = 0.05;  // aimed icon-center distance, normalized-diagonal
};

// Rule-based offline editor: proposes `edits_per_attempt` icons drawn from
// related_descs, placed in the free zones around the target at roughly
// target_delta from its center, jittered per (depth, pass) so parallel
// passes differ. Emits a standard edit-plan block.
class scripted_strategic_editor final : public editor_backend {
public:
    explicit scripted_strategic_editor(scripted_strategic_options opts);

    std::string propose(const prompt_bundle&, const editor_call_context& ctx) override;

private:
    scripted_strategic_options opts_;
};

} // namespace decoy
