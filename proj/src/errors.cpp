#include "oscope/errors.hpp"

namespace oscope {

void rethrow_with_context(const Error& e, const std::string& prefix) {
    const std::string msg = prefix + e.what();
    const auto& k = e.kind();
    if (k == "FormatError") throw FormatError(msg);
    if (k == "DuplicateIdError") throw DuplicateIdError(msg);
    if (k == "CorruptError") throw CorruptError(msg);
    if (k == "ValueError") throw ValueError(msg);
    if (k == "IoError") throw IoError(msg);
    if (k == "DimError") throw DimError(msg);
    if (k == "IndexError") throw IndexError(msg);
    if (k == "UnsupportedError") throw UnsupportedError(msg);
    if (k == "ConfigError") throw ConfigError(msg);
    if (k == "KeyError") throw KeyError(msg);
    if (k == "TrainingError") throw TrainingError(msg);
    throw Error(k, msg);
}

}  // namespace oscope
