#pragma once

// Everything except the network clients (halucheck/http_backend.hpp).

#include "halucheck/batch.hpp"
#include "halucheck/config.hpp"
#include "halucheck/engine.hpp"
#include "halucheck/eval.hpp"
#include "halucheck/extra_tools.hpp"
#include "halucheck/forge.hpp"
