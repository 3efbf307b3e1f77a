#include "genie/train/report.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

namespace genie::train {

EvalReport evaluate_model(model::GenieModel<float>& m, const std::string& name,
                          std::span<const data::TrainingExample> examples, std::span<const GoldMelody> gold,
                          const EvalOptions& options, std::ostream* warnings) {
  EvalReport r;
  r.name = name;
  r.ppl = eval_ppl(m, examples, options.batch_size);
  if (m.config().has_encoder()) {
    r.cvr = eval_cvr(m, examples, options.cvr_mode);
    if (!gold.empty()) r.gold_mse = eval_gold(m, gold, options.gold_raw, warnings);
  }
  return r;
}

namespace {

std::string fixed(std::optional<double> v, int digits) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  std::vector<std::vector<std::string>> rows = {{"model", "step", "PPL", "CVR", "Gold"}};
  for (const auto& r : reports)
    rows.push_back({r.name, r.step ? std::to_string(*r.step) : "", fixed(r.ppl, 3), fixed(r.cvr, 3),
                    fixed(r.gold_mse, 3)});
  std::vector<std::size_t> width(5, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const std::string& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      if (c > 0) line += "  ";
      line += c == 0 ? cell + pad : pad + cell;  // names left, numbers right
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
    }
  }
  return out;
}

std::string render_jsonl(std::span<const EvalReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::json j = {{"model", r.name}, {"ppl", r.ppl}};
    if (r.step) j["step"] = *r.step;
    if (r.cvr) j["cvr"] = *r.cvr;
    if (r.gold_mse) j["gold_mse"] = *r.gold_mse;
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace genie::train
