#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace analyze_rt::templates {

// Embedded from templates/*.txt at configure time.
extern const std::string_view kResearchJudgePrompt;
extern const std::string_view kResearchJudgePromptSha256;
extern const std::string_view kReportRubric;

/// Replaces each "{name}" placeholder in one left-to-right pass; substituted
/// values are never rescanned.
std::string render(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>>& values);

}  // namespace analyze_rt::templates
