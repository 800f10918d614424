// disc_synth: writes a labeled sinusoid dataset (one CSV per class and
// split, plus manifest.csv) for trying the pipeline without real data.

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "disc/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic DISC dataset"};
    disc::SyntheticOptions o;
    std::string dir;
    app.add_option("--out", dir, "output directory")->required();
    app.add_option("--classes", o.classes)->capture_default_str();
    app.add_option("--channels", o.channels)->capture_default_str();
    app.add_option("--window", o.window)->capture_default_str();
    app.add_option("--train-windows", o.train_windows_per_class, "windows per class, train split")->capture_default_str();
    app.add_option("--test-windows", o.test_windows_per_class, "windows per class, test split")->capture_default_str();
    app.add_option("--noise", o.noise, "noise standard deviation")->capture_default_str();
    app.add_option("--seed", o.seed)->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        std::cout << disc::write_synthetic_dataset(dir, o).string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
