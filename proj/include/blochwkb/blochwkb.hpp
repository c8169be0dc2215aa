#pragma once

#include "blochwkb/core_types.hpp"
#include "blochwkb/fft.hpp"
#include "blochwkb/linalg.hpp"
#include "blochwkb/fourier_core.hpp"
#include "blochwkb/bloch_bands.hpp"
#include "blochwkb/dispersion.hpp"
#include "blochwkb/ray_coupling.hpp"
#include "blochwkb/jet.hpp"
#include "blochwkb/envelope.hpp"
#include "blochwkb/wkb_assembly.hpp"
#include "blochwkb/reference_oracles.hpp"
#include "blochwkb/validation.hpp"
#include "blochwkb/cli_io.hpp"
