// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/instance.hpp"
#include "harvest/seam.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace harvest::quality {

struct ClarityScore {
    int value = 0;  // 0..3
    std::string rationale;
};

enum class ClarityLabel { WellSpecified, Underspecified };

std::string_view to_string(ClarityLabel label);

/// 0 and 1 are well specified, 2 and 3 underspecified. Throws
/// Error(InvalidArgument) outside 0..3.
ClarityLabel binarize(int score);

struct JudgeVerdict {
    std::string judge_id;
    std::string instance_id;
    ClarityScore score;
};

/// Prompt variants differ in which instance fields reach the judge:
/// verified_e also sends the solution and test patches.
enum class PromptVariant { Verified, VerifiedPlus, VerifiedE, Spice };

std::string_view to_string(PromptVariant v);
PromptVariant prompt_variant_from_string(const std::string& name);

struct Judge {
    std::string id;
    std::shared_ptr<seam::CompletionClient> client;
};

/// Judge rationales shorter than this are rejected like an out-of-range score.
inline constexpr std::size_t kMinRationale = 100;

/// Sends a "judge" completion request and reads the score: either a JSON
/// object {"score", "rationale"} or free text ending in the option number.
/// An unusable reply is retried once; a second one throws Error(Seam).
/// verified_e without patch or test_patch throws Error(Precondition).
JudgeVerdict score_issue(const TaskInstance& instance, const Judge& judge, PromptVariant variant);

/// The request payload for a variant (exposed for inspection in tests).
nlohmann::json judge_payload(const TaskInstance& instance, PromptVariant variant);

/// Label from exactly three annotator scores: binarize(max).
ClarityLabel aggregate_human(const std::vector<int>& scores);

enum class Strategy { Single, Average, Consensus };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

/// Average threshold: keep iff mean raw score is below this.
inline constexpr double kAverageThreshold = 1.5;

/// Keep (true) or drop. single needs exactly one verdict; average and
/// consensus need at least two.
bool ensemble(const std::vector<JudgeVerdict>& verdicts, Strategy strategy);

/// Per instance keep/drop over a verdict collection, grouped by
/// instance_id. With Single, only `single_judge` verdicts are used.
std::map<std::string, bool> apply_ensemble(const std::vector<JudgeVerdict>& verdicts, Strategy strategy,
                                           const std::string& single_judge = {});

struct FilterMetrics {
    int tp = 0, fp = 0, fn = 0, tn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool precision_undefined = false;  // a 0/0 replaced by 0
    bool recall_undefined = false;
    bool f1_undefined = false;
};

/// Positive class is underspecified, so a dropped instance is a positive
/// prediction. Key sets must match; Error(InvalidArgument) otherwise.
FilterMetrics evaluate_filter(const std::map<std::string, bool>& keep, const std::map<std::string, ClarityLabel>& labels);

nlohmann::json to_json(const FilterMetrics& m);

// --- files ----------------------------------------------------------------------------

/// Newline-delimited {"instance_id", "scores": [a, b, c]}.
std::map<std::string, std::vector<int>> read_annotations(const std::string& text);
std::map<std::string, ClarityLabel> human_labels(const std::map<std::string, std::vector<int>>& annotations);

/// Newline-delimited {"judge_id", "instance_id", "score", "rationale"}. A
/// repeated (judge_id, instance_id) keeps its first record.
std::vector<JudgeVerdict> read_verdicts(const std::string& text);
std::string verdict_line(const JudgeVerdict& v);
/// Appends one line; safe to call from several threads.
void append_verdict(const std::filesystem::path& path, const JudgeVerdict& v);

} // namespace harvest::quality
