#pragma once

// Helpers for driving the command-line front end in-process.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "vocabdiff/cli.hpp"

namespace harness {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "vocabdiff");
    std::ostringstream out, err;
    const int code = vocabdiff::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("vocabdiff_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

class ScopedCwd {
public:
    explicit ScopedCwd(const std::filesystem::path& p) : old_(std::filesystem::current_path()) {
        std::filesystem::current_path(p);
    }
    ~ScopedCwd() { std::filesystem::current_path(old_); }
    ScopedCwd(const ScopedCwd&) = delete;
    ScopedCwd& operator=(const ScopedCwd&) = delete;

private:
    std::filesystem::path old_;
};

// Copies the bundled synthetic data into dir/data.
inline void stage_synthetic(const std::filesystem::path& source, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "data");
    for (const auto& e : std::filesystem::directory_iterator(source))
        std::filesystem::copy_file(e.path(), dir / "data" / e.path().filename(),
                                   std::filesystem::copy_options::overwrite_existing);
}

// features -> train-gbt -> predict with relative paths inside the current
// directory. Returns the first failing step's result, or the predict result.
inline CliResult train_predict_pipeline(const std::string& seed = "17") {
    auto r = run_cli({"features", "--items", "data/items.tsv", "--schema", "data/schema.json", "--freq",
                      "bnc=data/freq_bnc.tsv", "--freq", "subtlex=data/freq_subtlex.tsv", "--cefr", "evp=data/cefr.tsv",
                      "--out", "out/features.csv"});
    if (r.code != 0) return r;
    r = run_cli({"train-gbt", "--features", "out/features.csv", "--items", "data/items.tsv", "--seed", seed, "--out",
                 "out/model.json", "--oof-out", "out/oof.tsv"});
    if (r.code != 0) return r;
    return run_cli({"predict", "--model", "out/model.json", "--features", "out/features.csv", "--out", "out/pred.tsv"});
}

}  // namespace harness
