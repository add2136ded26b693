// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/quality.hpp"
#include "harvest/error.hpp"

#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>

namespace harvest::quality {

using nlohmann::json;

std::string_view to_string(ClarityLabel label) {
    return label == ClarityLabel::WellSpecified ? "well_specified" : "underspecified";
}

ClarityLabel binarize(int score) {
    if (score < 0 || score > 3) throw Error(ErrorKind::InvalidArgument, fmt::format("clarity score {} not in 0..3", score));
    return score <= 1 ? ClarityLabel::WellSpecified : ClarityLabel::Underspecified;
}

std::string_view to_string(PromptVariant v) {
    switch (v) {
    case PromptVariant::Verified: return "verified";
    case PromptVariant::VerifiedPlus: return "verified_plus";
    case PromptVariant::VerifiedE: return "verified_e";
    case PromptVariant::Spice: return "spice";
    }
    return "verified";
}

PromptVariant prompt_variant_from_string(const std::string& name) {
    for (auto v : {PromptVariant::Verified, PromptVariant::VerifiedPlus, PromptVariant::VerifiedE, PromptVariant::Spice}) {
        if (to_string(v) == name) return v;
    }
    throw Error(ErrorKind::InvalidArgument,
                "unknown prompt variant '" + name + "' (expected verified, verified_plus, verified_e or spice)");
}

json judge_payload(const TaskInstance& instance, PromptVariant variant) {
    json p{{"variant", std::string(to_string(variant))},
           {"instance_id", instance.instance_id},
           {"repo", instance.repo},
           {"problem_statement", instance.problem_statement}};
    if (variant == PromptVariant::VerifiedE) {
        p["patch"] = instance.patch;
        p["test_patch"] = instance.test_patch;
    }
    return p;
}

namespace {

std::optional<ClarityScore> parse_score(const std::string& text) {
    const auto trimmed = trim_ascii(text);
    if (!trimmed.empty() && trimmed.front() == '{') {
        const auto j = json::parse(trimmed, nullptr, false);
        if (j.is_object() && j.contains("score") && j["score"].is_number_integer()) {
            ClarityScore s{j["score"].get<int>(), j.value("rationale", "")};
            if (s.value < 0 || s.value > 3 || s.rationale.size() < kMinRationale) return std::nullopt;
            return s;
        }
        return std::nullopt;
    }
    static const boost::regex num(R"((?<![\w.])(\d+)(?![\w.]*\w))");
    boost::smatch last;
    bool found = false;
    for (boost::sregex_iterator it(trimmed.begin(), trimmed.end(), num), end; it != end; ++it) {
        last = *it;
        found = true;
    }
    if (!found) return std::nullopt;
    const auto digits = last[1].str();
    if (digits.size() > 1) return std::nullopt;
    const int value = digits[0] - '0';
    if (value > 3) return std::nullopt;
    auto rationale = trim_ascii(trimmed.substr(0, static_cast<std::size_t>(last.position(std::size_t{0}))));
    // Drop a dangling "Option:" style lead-in before the number.
    static const boost::regex lead(R"((?i)[\s*_]*(?:selected\s+)?(?:option|answer|score)?\s*(?:number)?\s*[:#-]?[\s*_]*$)");
    rationale = trim_ascii(boost::regex_replace(rationale, lead, ""));
    if (rationale.size() < kMinRationale) return std::nullopt;
    return ClarityScore{value, rationale};
}

} // namespace

JudgeVerdict score_issue(const TaskInstance& instance, const Judge& judge, PromptVariant variant) {
    if (instance.problem_statement.empty()) {
        throw Error(ErrorKind::Precondition, "score_issue: " + instance.instance_id + " has no problem statement");
    }
    if (variant == PromptVariant::VerifiedE && (instance.patch.empty() || instance.test_patch.empty())) {
        throw Error(ErrorKind::Precondition,
                    "score_issue: verified_e needs patch and test_patch for " + instance.instance_id);
    }
    if (!judge.client) throw Error(ErrorKind::Precondition, "score_issue: judge " + judge.id + " has no client");
    seam::CompletionRequest req{"judge", judge.id + ":" + instance.instance_id, judge_payload(instance, variant)};
    req.payload["judge_id"] = judge.id;
    std::string last;
    for (int attempt = 0; attempt < 2; ++attempt) {
        last = judge.client->complete(req);
        if (auto s = parse_score(last)) return JudgeVerdict{judge.id, instance.instance_id, *s};
    }
    throw Error(ErrorKind::Seam, fmt::format("judge {} gave no usable score for {} after a retry: {}", judge.id,
                                             instance.instance_id, last.substr(0, 200)));
}

ClarityLabel aggregate_human(const std::vector<int>& scores) {
    if (scores.size() != 3) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("aggregate_human needs 3 scores, got {}", scores.size()));
    }
    for (int s : scores) binarize(s);
    return binarize(*std::max_element(scores.begin(), scores.end()));
}

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::Single: return "single";
    case Strategy::Average: return "average";
    case Strategy::Consensus: return "consensus";
    }
    return "consensus";
}

Strategy strategy_from_string(const std::string& name) {
    for (auto s : {Strategy::Single, Strategy::Average, Strategy::Consensus}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown ensemble strategy '" + name + "' (single, average, consensus)");
}

bool ensemble(const std::vector<JudgeVerdict>& verdicts, Strategy strategy) {
    if (verdicts.empty()) throw Error(ErrorKind::InvalidArgument, "ensemble: no verdicts");
    for (const auto& v : verdicts) binarize(v.score.value);
    switch (strategy) {
    case Strategy::Single:
        if (verdicts.size() != 1) {
            throw Error(ErrorKind::InvalidArgument, fmt::format("single strategy takes 1 verdict, got {}", verdicts.size()));
        }
        return binarize(verdicts[0].score.value) == ClarityLabel::WellSpecified;
    case Strategy::Average: {
        if (verdicts.size() < 2) throw Error(ErrorKind::InvalidArgument, "average strategy needs at least 2 verdicts");
        const double sum = std::accumulate(verdicts.begin(), verdicts.end(), 0.0,
                                           [](double acc, const JudgeVerdict& v) { return acc + v.score.value; });
        return sum / static_cast<double>(verdicts.size()) < kAverageThreshold;
    }
    case Strategy::Consensus:
        if (verdicts.size() < 2) throw Error(ErrorKind::InvalidArgument, "consensus strategy needs at least 2 verdicts");
        return std::all_of(verdicts.begin(), verdicts.end(), [](const JudgeVerdict& v) {
            return binarize(v.score.value) == ClarityLabel::WellSpecified;
        });
    }
    return false;
}

std::map<std::string, bool> apply_ensemble(const std::vector<JudgeVerdict>& verdicts, Strategy strategy,
                                           const std::string& single_judge) {
    std::map<std::string, std::vector<JudgeVerdict>> by_instance;
    for (const auto& v : verdicts) {
        if (strategy == Strategy::Single && !single_judge.empty() && v.judge_id != single_judge) continue;
        by_instance[v.instance_id].push_back(v);
    }
    std::map<std::string, bool> out;
    for (const auto& [id, vs] : by_instance) out[id] = ensemble(vs, strategy);
    return out;
}

FilterMetrics evaluate_filter(const std::map<std::string, bool>& keep, const std::map<std::string, ClarityLabel>& labels) {
    std::vector<std::string> diff;
    std::set<std::string> a, b;
    for (const auto& kv : keep) a.insert(kv.first);
    for (const auto& kv : labels) b.insert(kv.first);
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    if (!diff.empty()) {
        throw Error(ErrorKind::InvalidArgument, "evaluate_filter: keys differ: " + join(diff, ", "));
    }
    FilterMetrics m;
    for (const auto& [id, kept] : keep) {
        const bool predicted = !kept;
        const bool actual = labels.at(id) == ClarityLabel::Underspecified;
        if (predicted && actual) ++m.tp;
        else if (predicted && !actual) ++m.fp;
        else if (!predicted && actual) ++m.fn;
        else ++m.tn;
    }
    const int total = m.tp + m.fp + m.fn + m.tn;
    m.accuracy = total ? static_cast<double>(m.tp + m.tn) / total : 0.0;
    if (m.tp + m.fp == 0) m.precision_undefined = true;
    else m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
    if (m.tp + m.fn == 0) m.recall_undefined = true;
    else m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
    if (m.precision + m.recall == 0.0) m.f1_undefined = true;
    else m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

json to_json(const FilterMetrics& m) {
    return json{{"tp", m.tp},
                {"fp", m.fp},
                {"fn", m.fn},
                {"tn", m.tn},
                {"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"precision_undefined", m.precision_undefined},
                {"recall_undefined", m.recall_undefined},
                {"f1_undefined", m.f1_undefined}};
}

namespace {

json parse_line(const std::string& line, std::size_t lineno, const char* what) {
    try {
        auto j = json::parse(line);
        if (!j.is_object()) throw Error(ErrorKind::Parse, fmt::format("{} line {}: not an object", what, lineno));
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, fmt::format("{} line {}: {}", what, lineno, e.what()));
    }
}

} // namespace

std::map<std::string, std::vector<int>> read_annotations(const std::string& text) {
    std::map<std::string, std::vector<int>> out;
    std::size_t n = 0;
    for (const auto& raw : split_lines(text)) {
        ++n;
        if (trim_ascii(raw).empty()) continue;
        const auto j = parse_line(raw, n, "annotations");
        try {
            const auto id = j.at("instance_id").get<std::string>();
            auto scores = j.at("scores").get<std::vector<int>>();
            if (scores.size() != 3) throw Error(ErrorKind::Parse, "need three scores");
            for (int s : scores) binarize(s);
            if (!out.emplace(id, std::move(scores)).second) throw Error(ErrorKind::Parse, "duplicate " + id);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("annotations line {}: {}", n, e.what()));
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, fmt::format("annotations line {}: {}", n, e.what()));
        }
    }
    return out;
}

std::map<std::string, ClarityLabel> human_labels(const std::map<std::string, std::vector<int>>& annotations) {
    std::map<std::string, ClarityLabel> out;
    for (const auto& [id, s] : annotations) out[id] = aggregate_human(s);
    return out;
}

std::vector<JudgeVerdict> read_verdicts(const std::string& text) {
    std::vector<JudgeVerdict> out;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t n = 0;
    for (const auto& raw : split_lines(text)) {
        ++n;
        if (trim_ascii(raw).empty()) continue;
        const auto j = parse_line(raw, n, "verdicts");
        JudgeVerdict v;
        try {
            v.judge_id = j.at("judge_id").get<std::string>();
            v.instance_id = j.at("instance_id").get<std::string>();
            v.score.value = j.at("score").get<int>();
            v.score.rationale = j.value("rationale", "");
            binarize(v.score.value);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("verdicts line {}: {}", n, e.what()));
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, fmt::format("verdicts line {}: {}", n, e.what()));
        }
        if (seen.insert({v.judge_id, v.instance_id}).second) out.push_back(std::move(v));
    }
    return out;
}

std::string verdict_line(const JudgeVerdict& v) {
    return json{{"judge_id", v.judge_id},
                {"instance_id", v.instance_id},
                {"score", v.score.value},
                {"rationale", v.score.rationale}}
        .dump();
}

void append_verdict(const std::filesystem::path& path, const JudgeVerdict& v) {
    static std::mutex mu;
    const std::lock_guard<std::mutex> lock(mu);
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
    out << verdict_line(v) << '\n';
}

} // namespace harvest::quality
