#pragma once

#include <exception>
#include <filesystem>
#include <ostream>

#include "rydgate/errors.hpp"

namespace rydgate::cli {

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const UnsupportedSize& e) {
        err << "unsupported size: " << e.what() << '\n';
        return kInputError;
    } catch (const DegenerateGeometry& e) {
        err << "degenerate geometry: " << e.what() << '\n';
        return kInputError;
    } catch (const InvalidArgument& e) {
        err << "invalid input: " << e.what() << '\n';
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
        return kInputError;
    }
}

}  // namespace rydgate::cli
