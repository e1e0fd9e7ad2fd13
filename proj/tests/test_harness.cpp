#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <Eigen/Dense>

#include "ntklens/data.hpp"
#include "ntklens/errors.hpp"
#include "ntklens/harness.hpp"
#include "ntklens/io.hpp"

using namespace ntklens;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig config_from_text(ExperimentKind kind, const TempDir& dir,
                                  const std::string& text) {
    const std::string cfg_path = dir.file("config.txt");
    std::ofstream(cfg_path) << text;
    return ExperimentConfig::load(kind, cfg_path, "", "");
}

}  // namespace

TEST_CASE("CSV ingestion: exact values, label mapping, error paths") {
    TempDir dir("ntklens_csv_test");
    const std::string path = dir.file("data.csv");
    std::ofstream(path) << "f1,f2,label\n1,10,b\n2,20,a\n3,30,b\n";
    const TabularDataset d = load_tabular_csv(path, "label");
    CHECK(d.X.rows() == 3);
    CHECK(d.num_classes == 2);
    CHECK(d.feature_names == std::vector<std::string>{"f1", "f2"});
    // Standardization is invertible: recover the raw features exactly.
    for (int n = 0; n < 3; ++n) {
        CHECK(d.X(n, 0) * d.feature_std[0] + d.feature_mean[0] ==
              doctest::Approx(n + 1.0).epsilon(1e-14));
        CHECK(d.X(n, 1) * d.feature_std[1] + d.feature_mean[1] ==
              doctest::Approx(10.0 * (n + 1)).epsilon(1e-14));
    }
    // Non-numeric labels map in first-appearance order: b -> 0, a -> 1.
    CHECK(d.y[0] == 0);
    CHECK(d.y[1] == 1);

    std::ofstream(dir.file("bad.csv")) << "f1,label\n1,a\nnan,b\n";
    CHECK_THROWS_AS(load_tabular_csv(dir.file("bad.csv"), "label"), ParseError);
    CHECK_THROWS_AS(load_tabular_csv(path, "missing_column"), ParseError);
}

TEST_CASE("CSV label column with 26 numeric classes") {
    TempDir dir("ntklens_csv_letters");
    std::ofstream out(dir.file("letters.csv"));
    out << "x,label\n";
    for (int i = 0; i < 52; ++i) out << i * 0.5 << "," << (i % 26) << "\n";
    out.close();
    CHECK(load_tabular_csv(dir.file("letters.csv"), "label").num_classes == 26);
}

TEST_CASE("IDX round trip and truncation error") {
    TempDir dir("ntklens_idx_test");
    ImageDataset fixture;
    fixture.height = 3;
    fixture.width = 3;
    fixture.num_classes = 2;
    fixture.X.resize(2, 9);
    for (int i = 0; i < 9; ++i) {
        fixture.X(0, i) = i / 255.0 * 20.0;
        fixture.X(1, i) = (8 - i) / 255.0 * 20.0;
    }
    fixture.y.resize(2);
    fixture.y << 1, 0;
    write_idx_images(dir.file("img.idx"), fixture);
    write_idx_labels(dir.file("lab.idx"), fixture);
    const ImageDataset back = load_idx_images(dir.file("img.idx"), dir.file("lab.idx"));
    CHECK(back.X.rows() == 2);
    CHECK((back.X - fixture.X).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(back.y[0] == 1);

    // Truncate the image file and expect a format error.
    const std::string full = slurp(dir.file("img.idx"));
    std::ofstream(dir.file("trunc.idx"), std::ios::binary)
        << full.substr(0, full.size() / 2);
    CHECK_THROWS_AS(load_idx_images(dir.file("trunc.idx"), dir.file("lab.idx")),
                    FormatError);
}

TEST_CASE("key-value configs reject unknown keys; quantiles use the documented rule") {
    CHECK_THROWS_AS(KVConfig::parse_text("bogus = 1\n", {"widths"}), ConfigError);
    const KVConfig cfg = KVConfig::parse_text("widths = 64 \n# comment\n", {"widths"});
    CHECK(cfg.get("widths", "") == "64");

    CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
    CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
    CHECK(quantile({1, 2, 3, 4, 5}, 0.75) == 4.0);
}

TEST_CASE("plot-data aggregation: single row, quantile rows, round trip") {
    CsvTable table({"experiment", "width", "value"});
    table.add_row({"sweep", "64", "1"});
    const CsvTable single = emit_plot_data(table);
    CHECK(single.rows() == 3);  // median/q25/q75 of one value
    CHECK(single.data()[0][2] == "median");
    CHECK(single.data()[0][3] == "1");

    for (const char* v : {"2", "3", "4", "5"}) table.add_row({"sweep", "64", v});
    const CsvTable agg = emit_plot_data(table);
    CHECK(agg.data()[0][3] == "3");
    CHECK(agg.data()[1][3] == "2");
    CHECK(agg.data()[2][3] == "4");

    TempDir dir("ntklens_plotdata");
    agg.write(dir.file("agg.csv"));
    const CsvTable back = CsvTable::read(dir.file("agg.csv"));
    CHECK(back.columns() == agg.columns());
    CHECK(back.data() == agg.data());
}

TEST_CASE("empty seed list produces a no-op manifest") {
    TempDir dir("ntklens_noop");
    ExperimentConfig cfg = config_from_text(ExperimentKind::Diagnose, dir,
                                            "widths = 16\nout = " + dir.file("out") + "\n");
    const RunOutcome outcome = run_experiment(cfg);
    CHECK(outcome.manifest.files.empty());
    CHECK(!outcome.partial_failure);
    CHECK(fs::exists(dir.file("out") + std::string("/manifest.json")));
}

TEST_CASE("diagnose run emits exactly the promised files, inventory matches disk") {
    TempDir dir("ntklens_diag_run");
    ExperimentConfig cfg = config_from_text(
        ExperimentKind::Diagnose, dir,
        "widths = 128\nn_train = 8\nk_samples = 2\nseeds = 1\nout = " + dir.file("out") +
            "\n");
    const RunOutcome outcome = run_experiment(cfg);
    const std::set<std::string> inventory(outcome.manifest.files.begin(),
                                          outcome.manifest.files.end());
    CHECK(inventory ==
          std::set<std::string>{"stability_report.csv", "stability_manifest.json"});
    std::set<std::string> on_disk;
    for (const auto& entry : fs::directory_iterator(dir.file("out")))
        if (entry.path().filename() != "manifest.json")
            on_disk.insert(entry.path().filename().string());
    CHECK(on_disk == inventory);
}

TEST_CASE("identical configs reproduce byte-identical result CSVs") {
    TempDir dir("ntklens_determinism");
    const std::string body =
        "widths = 64,128\nn_train = 8\nk_samples = 2\nseeds = 1,2\nout = ";
    ExperimentConfig a = config_from_text(ExperimentKind::Diagnose, dir,
                                          body + dir.file("a") + "\n");
    run_experiment(a);
    ExperimentConfig b = config_from_text(ExperimentKind::Diagnose, dir,
                                          body + dir.file("b") + "\n");
    run_experiment(b);
    CHECK(slurp(dir.file("a") + std::string("/stability_report.csv")) ==
          slurp(dir.file("b") + std::string("/stability_report.csv")));
}

TEST_CASE("figure1 run: file inventory, grid coverage, finite bands") {
    TempDir dir("ntklens_fig1");
    ExperimentConfig cfg = config_from_text(
        ExperimentKind::Figure1, dir,
        "width = 8\nwidth_factor = 10\ndepth = 3\nn_train = 10\nepochs = 100\n"
        "grid_points = 21\nseeds = 1\nout = " +
            dir.file("out") + "\n");
    const RunOutcome outcome = run_experiment(cfg);
    CHECK(!outcome.partial_failure);
    const CsvTable table = CsvTable::read(dir.file("out") + std::string("/figure1.csv"));
    CHECK(table.rows() == 21);
    // Width-x10 variant adds its own prediction and band columns.
    const auto& cols = table.columns();
    CHECK(std::count(cols.begin(), cols.end(), "pred_m8") == 1);
    CHECK(std::count(cols.begin(), cols.end(), "pred_m80") == 1);
    for (const auto& row : table.data())
        for (const auto& cell : row) CHECK(std::isfinite(std::stod(cell)));
}

TEST_CASE("unknown config keys are rejected before any computation") {
    TempDir dir("ntklens_badcfg");
    const std::string cfg_path = dir.file("config.txt");
    std::ofstream(cfg_path) << "widths = 16\nhorizon = 100\n";
    CHECK_THROWS_AS(ExperimentConfig::load(ExperimentKind::Diagnose, cfg_path, "", ""),
                    ConfigError);
}
