#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace vocabdiff {

double rmse(const std::vector<double>& pred, const std::vector<double>& gold);
double pearson(const std::vector<double>& pred, const std::vector<double>& gold);

// Items sorted by score descending (rank 1 = easiest); equal scores keep
// input order.
class RankedCorpus {
public:
    RankedCorpus(const std::vector<std::string>& item_ids, const std::vector<double>& scores);

    std::size_t size() const { return scores_.size(); }
    const std::vector<double>& scores() const { return scores_; }  // by rank, 0-based
    const std::vector<std::string>& ids() const { return ids_; }
    // 1-based rank.
    std::size_t rank_of(const std::string& item_id) const;

private:
    std::vector<std::string> ids_;
    std::vector<double> scores_;
    std::map<std::string, std::size_t> rank_;
};

struct CiWidths {
    std::map<std::string, int> per_l1;

    static CiWidths kvl_defaults();  // es 69, zh 95, de 108
    int width(const std::string& l1) const;
};

// For each eval item, the corpus score within +-w ranks that lies farthest
// from the item's own score; ties pick the lower score.
std::vector<double> statistical_optimum(const RankedCorpus& corpus, const std::vector<std::string>& eval_ids,
                                        const CiWidths& widths, const std::string& l1);
std::vector<double> statistical_optimum(const RankedCorpus& corpus, const std::vector<std::string>& eval_ids,
                                        int width);

struct Report {
    std::string l1;
    std::size_t n = 0;
    double rmse = 0.0;
    double pcc = 0.0;
};

Report evaluate_report(const std::vector<double>& pred, const std::vector<double>& gold, const std::string& l1);

struct MultiReport {
    std::vector<Report> per_l1;
    double mean_rmse = 0.0;
    double mean_pcc = 0.0;
};

// Unweighted mean over L1s.
MultiReport aggregate(std::vector<Report> reports);

nlohmann::json to_json(const Report& r);
nlohmann::json to_json(const MultiReport& r);
// One row per system, one RMSE/PCC column pair per L1 plus the mean.
std::string format_table(const std::vector<std::pair<std::string, MultiReport>>& systems);

}  // namespace vocabdiff
