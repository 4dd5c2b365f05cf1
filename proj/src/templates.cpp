#include "analyze_rt/templates.hpp"

namespace analyze_rt::templates {

std::string render(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    bool replaced = false;
    for (const auto& [name, value] : values) {
      const auto len = name.size();
      if (tmpl.compare(open + 1, len, name) == 0 && open + 1 + len < tmpl.size() && tmpl[open + 1 + len] == '}') {
        out.append(value);
        pos = open + len + 2;
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      out.push_back('{');
      pos = open + 1;
    }
  }
  out.append(tmpl.substr(std::min(pos, tmpl.size())));
  return out;
}

}  // namespace analyze_rt::templates
