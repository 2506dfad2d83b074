async def fetch_all(client, urls):
    results = []
    for url in urls:
        response = await client.get(url)
        if response.ok:
            results.append(response)
    return results
