// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/kernels/kernels.hpp"

#include "smokegs/core/errors.hpp"

#include <cstdlib>
#include <string>

namespace smokegs::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* resolve_auto() {
    if (const char* env = std::getenv("SMOKEGS_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") {
            return &scalar_table();
        }
        if (want == "avx2") {
            if (!avx2_available()) {
                throw usage_error("SMOKEGS_KERNELS=avx2 but AVX2 kernels are unavailable");
            }
            return &avx2_table();
        }
        if (!want.empty() && want != "auto") {
            throw usage_error("SMOKEGS_KERNELS must be auto, scalar or avx2 (got '" + want + "')");
        }
    }
    return avx2_available() ? &avx2_table() : &scalar_table();
}

const KernelTable*& active_slot() {
    static const KernelTable* slot = resolve_auto();
    return slot;
}

} // namespace

bool avx2_available() {
    return avx2_table().name != nullptr && cpu_has_avx2();
}

const KernelTable& active() {
    return *active_slot();
}

void select(Impl impl) {
    switch (impl) {
    case Impl::scalar:
        active_slot() = &scalar_table();
        return;
    case Impl::avx2:
        if (!avx2_available()) {
            throw usage_error("AVX2 kernels are unavailable on this build or CPU");
        }
        active_slot() = &avx2_table();
        return;
    }
    throw usage_error("unknown kernel implementation");
}

void select_auto() {
    active_slot() = resolve_auto();
}

std::string active_name() {
    return active().name;
}

} // namespace smokegs::kernels
