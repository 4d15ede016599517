#pragma once

#include "pai/kernels.hpp"

namespace pai::kernels {

namespace scalar {
extern const KernelTable kTable;
}

#if defined(__x86_64__) || defined(_M_X64)
#define PAI_HAVE_X86 1
namespace avx2 {
extern const KernelTable kTable;
}
#else
#define PAI_HAVE_X86 0
#endif

}  // namespace pai::kernels
