CHAINS = {"eth": "https://cloudflare-eth.com", "btc": "https://blockstream.info/api"}


def balance_url(chain, address):
    return f"{CHAINS[chain]}/address/{address}"
