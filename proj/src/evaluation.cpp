#include "vocabdiff/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "vocabdiff/error.hpp"

namespace vocabdiff {

namespace {

void check_aligned(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw InputError("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.empty()) throw InputError("cannot evaluate empty vectors");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw InputError("non-finite value at position " + std::to_string(i));
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& gold) {
    check_aligned(pred, gold);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gold[i]) * (pred[i] - gold[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double pearson(const std::vector<double>& pred, const std::vector<double>& gold) {
    check_aligned(pred, gold);
    if (pred.size() < 2) throw InputError("correlation needs at least two points");
    const double n = static_cast<double>(pred.size());
    const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    const double mg = std::accumulate(gold.begin(), gold.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i] - mp, dy = gold[i] - mg;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw InputError("correlation is undefined for zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

RankedCorpus::RankedCorpus(const std::vector<std::string>& item_ids, const std::vector<double>& scores) {
    if (item_ids.size() != scores.size()) throw InputError("ids and scores differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& id = item_ids[order[r]];
        if (!std::isfinite(scores[order[r]])) throw InputError("non-finite score for item '" + id + "'");
        if (!rank_.emplace(id, r + 1).second) throw InputError("duplicate item id '" + id + "'");
        ids_.push_back(id);
        scores_.push_back(scores[order[r]]);
    }
}

std::size_t RankedCorpus::rank_of(const std::string& item_id) const {
    const auto it = rank_.find(item_id);
    if (it == rank_.end()) throw InputError("item '" + item_id + "' is not in the corpus");
    return it->second;
}

CiWidths CiWidths::kvl_defaults() { return CiWidths{{{"es", 69}, {"zh", 95}, {"de", 108}}}; }

int CiWidths::width(const std::string& l1) const {
    const auto it = per_l1.find(l1);
    if (it == per_l1.end()) throw InputError("no confidence-interval width for L1 '" + l1 + "'");
    if (it->second < 0) throw InputError("confidence-interval width must be nonnegative");
    return it->second;
}

std::vector<double> statistical_optimum(const RankedCorpus& corpus, const std::vector<std::string>& eval_ids,
                                        int width) {
    if (width < 0) throw InputError("width must be nonnegative");
    const auto& s = corpus.scores();
    const auto w = static_cast<std::size_t>(width);
    std::vector<double> out;
    out.reserve(eval_ids.size());
    for (const auto& id : eval_ids) {
        const std::size_t r = corpus.rank_of(id) - 1;
        const std::size_t lo = r >= w ? r - w : 0;
        const std::size_t hi = std::min(s.size() - 1, r + std::min(w, s.size()));
        const double own = s[r];
        double best = own, best_d = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            const double d = std::abs(s[j] - own);
            if (d > best_d || (d == best_d && s[j] < best)) {
                best = s[j];
                best_d = d;
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<double> statistical_optimum(const RankedCorpus& corpus, const std::vector<std::string>& eval_ids,
                                        const CiWidths& widths, const std::string& l1) {
    return statistical_optimum(corpus, eval_ids, widths.width(l1));
}

Report evaluate_report(const std::vector<double>& pred, const std::vector<double>& gold, const std::string& l1) {
    return Report{l1, pred.size(), rmse(pred, gold), pearson(pred, gold)};
}

MultiReport aggregate(std::vector<Report> reports) {
    if (reports.empty()) throw InputError("no reports to aggregate");
    std::set<std::string> seen;
    for (const auto& r : reports)
        if (!seen.insert(r.l1).second) throw InputError("duplicate L1 '" + r.l1 + "' in reports");
    MultiReport m;
    for (const auto& r : reports) {
        m.mean_rmse += r.rmse;
        m.mean_pcc += r.pcc;
    }
    m.mean_rmse /= static_cast<double>(reports.size());
    m.mean_pcc /= static_cast<double>(reports.size());
    m.per_l1 = std::move(reports);
    return m;
}

nlohmann::json to_json(const Report& r) { return {{"l1", r.l1}, {"n", r.n}, {"rmse", r.rmse}, {"pcc", r.pcc}}; }

nlohmann::json to_json(const MultiReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& x : r.per_l1) per.push_back(to_json(x));
    return {{"per_l1", per}, {"mean", {{"rmse", r.mean_rmse}, {"pcc", r.mean_pcc}}}};
}

std::string format_table(const std::vector<std::pair<std::string, MultiReport>>& systems) {
    std::vector<std::string> l1s;
    for (const auto& [name, rep] : systems)
        for (const auto& r : rep.per_l1)
            if (std::find(l1s.begin(), l1s.end(), r.l1) == l1s.end()) l1s.push_back(r.l1);

    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"system"};
    for (const auto& l : l1s) {
        head.push_back(l + " RMSE");
        head.push_back(l + " PCC");
    }
    head.push_back("Mean RMSE");
    head.push_back("Mean PCC");
    cells.push_back(head);

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return std::string(buf);
    };
    for (const auto& [name, rep] : systems) {
        std::vector<std::string> row{name};
        for (const auto& l : l1s) {
            const auto it = std::find_if(rep.per_l1.begin(), rep.per_l1.end(), [&](const Report& r) { return r.l1 == l; });
            row.push_back(it == rep.per_l1.end() ? "-" : fmt(it->rmse));
            row.push_back(it == rep.per_l1.end() ? "-" : fmt(it->pcc));
        }
        row.push_back(fmt(rep.mean_rmse));
        row.push_back(fmt(rep.mean_pcc));
        cells.push_back(row);
    }

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                out += row[c] + std::string(width[c] - row[c].size(), ' ');
            } else {
                out += "  " + std::string(width[c] - row[c].size(), ' ') + row[c];
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace vocabdiff
