#include "watchdog.h"

void wdg_start(watchdog_t *w, uint32_t timeout_ms)
{
    w->timeout_ms = timeout_ms ? timeout_ms : WDG_DEFAULT_TIMEOUT_MS;
    w->elapsed_ms = 0;
    w->expired = false;
}

void wdg_kick(watchdog_t *w)
{
    if (!w->expired) {
        w->elapsed_ms = 0;
    }
}

bool wdg_tick(watchdog_t *w, uint32_t delta_ms)
{
    w->elapsed_ms += delta_ms;
    if (w->elapsed_ms >= w->timeout_ms) {
        w->expired = true;
    }
    return w->expired;
}
